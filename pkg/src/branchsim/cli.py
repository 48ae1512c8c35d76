"""Command-line entry point ``branchsim``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import acceptance, experiments
from .config import PRESET_NAMES, load_config, preset
from .errors import BranchsimError, ConfigError, UnknownPreset
from .renewal import solve_linear_system

EXIT_OK, EXIT_FAIL, EXIT_IO = 0, 1, 2


def _load(path) -> tuple:
    cfg = load_config(path)
    return cfg.with_seed_override()


def cmd_run(args) -> int:
    cfg, source = _load(args.config)
    report = experiments.run(cfg, workers=args.workers, seed_source=source)
    for c in report["checks"]:
        state = "SKIP" if c.get("skipped") else ("PASS" if c["passed"] else "FAIL")
        print(f"[{state}] {c['id']}: {c['detail']}")
    print(f"report written to {Path(cfg.output_dir) / 'report.json'}")
    if args.strict and experiments.report_failed(report):
        return EXIT_FAIL
    return EXIT_OK


def cmd_preset(args) -> int:
    sys.stdout.write(preset(args.name).to_json() + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.config is not None:
        cfg, _ = _load(args.config)
    else:
        cfg, _ = preset(args.name).with_seed_override()
    if args.scale is not None:
        from .config import replace

        cfg = replace(cfg, acceptance_scale=args.scale)
    results = acceptance.verify(cfg, echo=print)
    summ = acceptance.summary(results)
    print(f"{summ['passed']} passed, {summ['failed']} failed, {summ['skipped']} skipped")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(summ, fh, indent=2)
    if args.strict and summ["failed"]:
        return EXIT_FAIL
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg, _ = _load(args.config)
    t_max = args.t_max if args.t_max is not None else min(max(cfg.t_grid), 10.0)
    grid = solve_linear_system(cfg.model, t_max, args.delta)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "occupation_cdf.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.write_csv(out, stride=args.stride)
    print(f"solved on {grid.r.shape[2]}x{grid.r.shape[3]} grid, delta={grid.delta}, "
          f"{grid.iterations} sweeps, final change {grid.residual:.2e}")
    print(f"table written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="branchsim", description="Multitype critical branching particle systems.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--strict", action="store_true", help="exit 1 if any check fails")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("preset", help="print a named configuration as JSON")
    s.add_argument("name", choices=PRESET_NAMES)
    s.set_defaults(func=cmd_preset)

    v = sub.add_parser("verify", help="run the acceptance suite")
    grp = v.add_mutually_exclusive_group(required=True)
    grp.add_argument("name", nargs="?", help="preset name")
    grp.add_argument("--config")
    v.add_argument("--scale", type=float, default=None, help="override acceptance_scale")
    v.add_argument("--json", default=None, help="also write verdicts to this file")
    v.add_argument("--strict", action="store_true")
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("solve-renewal", help="deterministic occupation-time solver")
    o.add_argument("--config", required=True)
    o.add_argument("--t-max", type=float, default=None)
    o.add_argument("--delta", type=float, default=0.02)
    o.add_argument("--stride", type=int, default=10)
    o.add_argument("--out", default=None)
    o.set_defaults(func=cmd_solve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args)
    except (ConfigError, UnknownPreset, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BranchsimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
