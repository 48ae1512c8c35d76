"""Experiment configuration, JSON schema and named presets."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import BranchsimError, ConfigError, UnknownPreset
from .lifetimes import Exponential, LightPareto, ParetoTail
from .model import ModelSpec
from .offspring import FactorizedOffspring

SCHEMA_VERSION = 1
SCENARIOS = ("FiniteMean", "CaseA", "CaseB1", "CaseB2", "RenewalOnly", "Custom")
SEED_ENV = "BRANCHSIM_SEED"

_TOP_KEYS = {
    "schema_version", "name", "scenario", "model", "t_grid", "replicas", "seed",
    "window_L", "ball_radius", "output_dir", "tolerances", "acceptance_scale",
}
_MODEL_KEYS = {"d", "alphas", "lifetimes", "offspring", "intensities"}
DEFAULT_TOLERANCES = {"one_sided_nse": 3.0, "trend_nse": 2.0, "conservation_nse": 4.0}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    scenario: str
    t_grid: tuple
    replicas: int
    seed: int
    name: str = "custom"
    window_L: float = 3.0
    ball_radius: float = 1.0
    output_dir: str = "branchsim-out"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    acceptance_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "t_grid", tuple(float(t) for t in self.t_grid))
        object.__setattr__(self, "tolerances", {**DEFAULT_TOLERANCES, **dict(self.tolerances)})
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        if not isinstance(self.replicas, int) or isinstance(self.replicas, bool) or self.replicas < 1:
            raise ConfigError("replicas must be an integer >= 1")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        if not self.t_grid or any(t <= 0 for t in self.t_grid):
            raise ConfigError("t_grid must be nonempty and positive")
        if any(b <= a for a, b in zip(self.t_grid, self.t_grid[1:])):
            raise ConfigError("t_grid must be strictly increasing")
        if self.window_L <= 0 or self.ball_radius <= 0 or self.acceptance_scale <= 0:
            raise ConfigError("window_L, ball_radius and acceptance_scale must be positive")
        unknown = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if unknown:
            raise ConfigError(f"unknown tolerance keys {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "scenario": self.scenario,
            "model": self.model.to_dict(),
            "t_grid": list(self.t_grid),
            "replicas": self.replicas,
            "seed": self.seed,
            "window_L": self.window_L,
            "ball_radius": self.ball_radius,
            "output_dir": self.output_dir,
            "tolerances": dict(self.tolerances),
            "acceptance_scale": self.acceptance_scale,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_seed_override(self, environ=None) -> tuple["ExperimentConfig", str]:
        """Apply ``BRANCHSIM_SEED`` if set; returns the config and the seed's source."""
        env = os.environ if environ is None else environ
        raw = env.get(SEED_ENV)
        if raw is None or raw == "":
            return self, "config"
        try:
            seed = int(raw, 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None
        return _replace(self, seed=seed), "env"


def _replace(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    data = {
        "model": cfg.model, "scenario": cfg.scenario, "t_grid": cfg.t_grid, "replicas": cfg.replicas,
        "seed": cfg.seed, "name": cfg.name, "window_L": cfg.window_L, "ball_radius": cfg.ball_radius,
        "output_dir": cfg.output_dir, "tolerances": cfg.tolerances, "acceptance_scale": cfg.acceptance_scale,
    }
    data.update(changes)
    return ExperimentConfig(**data)


replace = _replace


def config_from_dict(data: dict) -> ExperimentConfig:
    """Strict parse: unknown keys and wrong schema versions are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    for key in ("model", "scenario", "t_grid", "replicas", "seed"):
        if key not in data:
            raise ConfigError(f"missing config key {key!r}")
    mdata = data["model"]
    if not isinstance(mdata, dict):
        raise ConfigError("model must be an object")
    unknown = set(mdata) - _MODEL_KEYS
    if unknown:
        raise ConfigError(f"unknown model keys {sorted(unknown)}")
    try:
        model = ModelSpec.from_dict(mdata)
        kwargs = {k: v for k, v in data.items() if k not in ("schema_version", "model")}
        return ExperimentConfig(model=model, **kwargs)
    except ConfigError:
        raise
    except (BranchsimError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def config_from_json(text: str) -> ExperimentConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    return config_from_dict(data)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return config_from_json(fh.read())


# -- presets -----------------------------------------------------------------


def _fact(beta, rows, c=None):
    return tuple(FactorizedOffspring(beta, c if c is not None else 0.9 / (1 + beta) if beta < 1 else 0.5, row) for row in rows)


def _finite_mean():
    rows = ((0.7, 0.3), (0.4, 0.6))
    return ModelSpec(1, (2.0, 1.8), (Exponential(1.0), Exponential(1.0)), _fact(1.0, rows, 0.5), (1.0, 1.0))


def _case_a():
    rows = ((0.5, 0.5), (0.5, 0.5))
    return ModelSpec(1, (1.0, 1.5), (ParetoTail(0.8, 1.0), LightPareto(4.0, 0.5, 1.0)), _fact(0.5, rows, 0.6), (1.0, 1.0))


def _case_b1():
    rows = ((0.5, 0.5), (0.5, 0.5))
    return ModelSpec(1, (1.2, 1.0), (ParetoTail(0.8, 1.0), LightPareto(4.0, 0.5, 1.0)), _fact(0.5, rows, 0.6), (1.0, 1.0))


def _case_b2():
    rows = ((0.5, 0.5), (0.5, 0.5))
    return ModelSpec(1, (2.0, 1.0), (ParetoTail(0.9, 1.0), LightPareto(4.0, 0.5, 1.0)), _fact(0.5, rows, 0.6), (1.0, 1.0))


def _renewal_only():
    rows = ((0.5, 0.5), (0.5, 0.5))
    return ModelSpec(1, (2.0, 2.0), (ParetoTail(0.5, 1.0), Exponential(1.0)), _fact(1.0, rows, 0.5), (1.0, 1.0))


def _occupation_tail():
    rows = ((0.5, 0.5), (0.5, 0.5))
    return ModelSpec(
        1, (2.0, 2.0), (ParetoTail(0.5, 1.0), LightPareto(2.0, 1e4, 100.0)), _fact(1.0, rows, 0.5), (1.0, 1.0)
    )


_PRESETS = {
    "finite-mean-subcritical": (_finite_mean, "FiniteMean", (25, 50, 100, 200), 200_000),
    "case-a": (_case_a, "CaseA", (25, 50, 100, 200), 200_000),
    "case-b1": (_case_b1, "CaseB1", (25, 50, 100, 200), 200_000),
    "case-b2": (_case_b2, "CaseB2", (25, 50, 100, 200), 200_000),
    "renewal-only": (_renewal_only, "RenewalOnly", (1e3, 1e4, 1e5), 1_000),
    "occupation-tail": (_occupation_tail, "RenewalOnly", (1e3, 3e3, 1e4), 10_000),
}

PRESET_NAMES = tuple(_PRESETS)


def preset_model(name: str) -> ModelSpec:
    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; known: {', '.join(_PRESETS)}")
    return _PRESETS[name][0]()


def preset(name: str) -> ExperimentConfig:
    """Named configuration placed inside one theorem's hypothesis region."""
    if name not in _PRESETS:
        raise UnknownPreset(f"unknown preset {name!r}; known: {', '.join(_PRESETS)}")
    build, scenario, t_grid, reps = _PRESETS[name]
    return ExperimentConfig(
        model=build(),
        scenario=scenario,
        t_grid=t_grid,
        replicas=reps,
        seed=20240611,
        name=name,
        output_dir=f"branchsim-out/{name}",
    )
