"""The acceptance suite: twelve checks of exponents, identities and inequalities.

Every check takes a ``scale`` that multiplies its replica counts (floors
keep each estimate meaningful) and returns a :class:`CheckResult`. Model
dependent checks run on the two reference presets plus, optionally, an extra
model; an extra model whose theorem hypotheses fail is skipped, not failed.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import branching, renewal
from .config import preset_model
from .errors import HypothesisViolation
from .lifetimes import Exponential, ParetoTail, max_law_tail
from .model import ModelSpec, critical_dimensions, dimensions_from, hypothesis_checks, offspring_beta, spectral
from .motion import sample_stable_increment
from .offspring import FactorizedOffspring, survival_sequence
from .stats import ks_two_sample, nonincreasing


@dataclass
class CheckResult:
    id: int
    name: str
    passed: bool | None
    detail: str
    elapsed: float = 0.0
    skipped: bool = False
    warnings: list = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.skipped:
            return "SKIP"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        extra = f" [{'; '.join(self.warnings)}]" if self.warnings else ""
        return f"[{self.status}] {self.id:2d} {self.name}: {self.detail} ({self.elapsed:.1f}s){extra}"

    def to_dict(self) -> dict:
        return {
            "id": self.id, "name": self.name, "status": self.status, "passed": self.passed,
            "detail": self.detail, "elapsed": self.elapsed, "warnings": list(self.warnings),
        }


def _reps(n: int, scale: float, floor: int = 10) -> int:
    return max(floor, int(round(n * scale)))


def _rng(seed: int, check: int, sub: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 7919, check, sub]))


def _low_precision(reps: int) -> list:
    return [f"LowPrecision: {reps} replicas"] if reps < 100 else []


def random_stochastic(rng, K: int) -> np.ndarray:
    """Strictly positive random stochastic matrix (hence ergodic)."""
    M = rng.dirichlet(np.ones(K), size=K) + 1e-3
    return M / M.sum(axis=1, keepdims=True)


# -- 1 -----------------------------------------------------------------------


def check_spectral(seed: int = 0, scale: float = 1.0) -> CheckResult:
    rng = _rng(seed, 1)
    worst = 0.0
    for _ in range(50):
        K = int(rng.integers(1, 9))
        sd = spectral(random_stochastic(rng, K))
        worst = max(worst, max(sd.residuals.values()))
    return CheckResult(1, "spectral exactness", worst <= 1e-10, f"max residual {worst:.2e} over 50 matrices (<= 1e-10)")


# -- 2 -----------------------------------------------------------------------


def factorized_family(rng, K: int, beta_min: float, pool=(0.3, 0.5, 0.8, 1.0)) -> ModelSpec:
    """Factorized model whose smallest exponent is ``beta_min``."""
    betas = [beta_min] + [float(rng.choice([b for b in pool if b >= beta_min])) for _ in range(K - 1)]
    rows = rng.dirichlet(np.ones(K), size=K) + 1e-3 if K > 1 else np.ones((1, 1))
    rows = rows / rows.sum(axis=1, keepdims=True)
    laws = tuple(FactorizedOffspring(b, 0.9 / (1 + b), tuple(r)) for b, r in zip(betas, rows))
    return ModelSpec(1, (2.0,) * K, (Exponential(1.0),) * K, laws)


def check_beta(seed: int = 0, scale: float = 1.0) -> CheckResult:
    rng = _rng(seed, 2)
    worst, fit_worst = 0.0, 0.0
    for K in (1, 2, 4):
        for b in (0.3, 0.5, 0.8, 1.0):
            model = factorized_family(rng, K, b)
            res = offspring_beta(model, spectral(model.mean_matrix))
            worst = max(worst, abs(res.beta - b))
            fit_worst = max(fit_worst, abs(res.fitted - b))
    return CheckResult(
        2, "beta recovery", worst <= 1e-3,
        f"max |beta - min beta_i| = {worst:.1e} (<= 1e-3); log-log fit diagnostic off by <= {fit_worst:.3f}",
    )


# -- 3 -----------------------------------------------------------------------


def check_survival_exponent(seed: int = 0, scale: float = 1.0) -> CheckResult:
    out, ok = [], True
    for beta, c, tol in ((1.0, 0.5, 0.05), (0.5, 0.6, 0.15)):
        seq = survival_sequence([FactorizedOffspring(beta, c)], 10_000, window=(1_000, 10_000))
        slope = seq.fits[0].slope
        ok &= abs(slope + 1.0 / beta) <= tol
        out.append(f"beta={beta}: slope {slope:.4f} (target {-1 / beta:.2f} +/- {tol})")
    return CheckResult(3, "survival exponent", ok, "; ".join(out))


# -- 4 -----------------------------------------------------------------------


def check_renewal_count(seed: int = 0, scale: float = 1.0) -> CheckResult:
    model = preset_model("renewal-only")
    reps = _reps(1_000, scale)
    g = renewal.renewal_count_growth(model, [1e3, 1e4, 1e5], reps, _rng(seed, 4))
    ok = abs(g.fit.slope - model.gamma) <= 0.05
    return CheckResult(
        4, "renewal-count exponent", ok,
        f"slope of mean n_t {g.fit.slope:.4f} +/- {g.fit.stderr:.4f} vs gamma={model.gamma} (+/- 0.05)",
        warnings=_low_precision(reps),
    )


# -- 5 -----------------------------------------------------------------------


def check_occupation_decay(seed: int = 0, scale: float = 1.0) -> CheckResult:
    model = preset_model("occupation-tail")
    reps = _reps(10_000, scale)
    scan = renewal.occupation_tail_scan(model, [1e3, 3e3, 1e4], 0.05, reps, _rng(seed, 5))
    p = [e.p_hat for e in scan.estimates]
    mono = nonincreasing(scan.estimates, nse=2.0)
    strict = all(b < a for a, b in zip(p, p[1:]))
    limit = scan.bound_exponents["1-eta"] + 0.5
    slope = scan.fit.slope if scan.fit is not None else -math.inf
    ok = mono and strict and slope <= limit
    return CheckResult(
        5, "type-1 occupation decay", ok,
        f"P(tbar_1/t <= 0.05) = {', '.join(f'{x:.4f}' for x in p)}; slope {slope:.3f} (<= {limit:.2f})",
        warnings=_low_precision(reps),
    )


# -- 6 and 7 -----------------------------------------------------------------


DOMINATION_T = (2.0, 4.0, 6.0)
DOMINATION_FRAC = (0.25, 0.5, 0.75)


def _guarded(model, name) -> str | None:
    hyp = hypothesis_checks(model)
    bad = [why for ok, why in hyp.values() if not ok]
    return f"{name}: HypothesisViolation ({'; '.join(bad)})" if bad else None


def check_domination(seed: int = 0, scale: float = 1.0, extra: dict | None = None) -> CheckResult:
    reps = _reps(10_000, scale)
    models = {"finite-mean-subcritical": preset_model("finite-mean-subcritical"), "case-a": preset_model("case-a")}
    skipped = []
    for name, model in (extra or {}).items():
        why = _guarded(model, name)
        if why:
            skipped.append(why)
        else:
            models[name] = model
    worst, tight, lines = -math.inf, -math.inf, []
    for k, (name, model) in enumerate(models.items()):
        grid = renewal.solve_linear_system(model, max(DOMINATION_T), 0.02)
        a_vals = sorted({f * t for t in DOMINATION_T for f in DOMINATION_FRAC})
        nu = branching.mc_occupation_grid(model, 0, DOMINATION_T, a_vals, reps, _rng(seed, 6, k))
        for j in range(model.K):
            for p, t in enumerate(DOMINATION_T):
                for f in DOMINATION_FRAC:
                    a = f * t
                    est = nu[j][p][a_vals.index(a)]
                    bound = grid.alpha(0, j, t, a)
                    excess = (est.p_hat - bound) / max(est.se, 1e-12)
                    worst = max(worst, excess)
                    if 0.0 < bound < 1.0 and est.p_hat > 0.0:
                        tight = max(tight, excess)
        lines.append(name)
    ok = worst <= 3.0
    detail = (
        f"max (nu_hat - alpha)/SE = {worst:.2f} (<= 3), {tight:.2f} over cells with 0 < alpha < 1, "
        f"on {', '.join(lines)}"
    )
    return CheckResult(6, "domination nu <= alpha", ok, detail, warnings=_low_precision(reps) + skipped)


SOLVER_T = (3.0, 5.0, 8.0)
SOLVER_FRAC = (0.2, 0.4, 0.6, 0.8)


def check_solver_oracle(seed: int = 0, scale: float = 1.0) -> CheckResult:
    model = preset_model("case-a")
    reps = _reps(100_000, scale)
    grid = renewal.solve_linear_system(model, max(SOLVER_T), 0.02)
    cells = [(t, f * t) for t in SOLVER_T for f in SOLVER_FRAC]
    batch = renewal.simulate_occupations(model, 0, SOLVER_T, reps, _rng(seed, 7))
    worst = 0.0
    for t, a in cells:
        p = SOLVER_T.index(t)
        emp = np.mean(batch.occupation[:, p, 0] <= a)
        se = max(math.sqrt(emp * (1 - emp) / reps), 1.0 / reps)
        worst = max(worst, abs(emp - grid.alpha(0, 0, t, a)) / se)
    ok = worst <= 3.0 and grid.residual <= 1e-8
    return CheckResult(
        7, "solver vs Monte Carlo", ok,
        f"max |alpha - empirical|/SE = {worst:.2f} over {len(cells)} cells (<= 3); "
        f"fixed-point change {grid.residual:.1e} after {grid.iterations} sweeps",
        warnings=_low_precision(reps),
    )


# -- 8 -----------------------------------------------------------------------


def check_self_similarity(seed: int = 0, scale: float = 1.0) -> CheckResult:
    n = _reps(10_000, scale)
    summary, ok = [], True
    for a_idx, alpha in enumerate((0.8, 1.0, 1.5, 2.0)):
        good = 0
        for run in range(10):
            rng = _rng(seed, 8, 100 * a_idx + run)
            w4 = sample_stable_increment(alpha, 4.0, 1, rng, size=n)[:, 0]
            w1 = 4.0 ** (1.0 / alpha) * sample_stable_increment(alpha, 1.0, 1, rng, size=n)[:, 0]
            good += ks_two_sample(w4, w1).pvalue > 0.01
        ok &= good >= 8
        summary.append(f"alpha={alpha}: {good}/10")
    return CheckResult(8, "stable self-similarity", ok, ", ".join(summary), warnings=_low_precision(n))


# -- 9 -----------------------------------------------------------------------


def check_max_law(seed: int = 0, scale: float = 1.0) -> CheckResult:
    reps = _reps(1_000_000, scale, floor=1000)
    out = max_law_tail(ParetoTail(0.5, 1.0), Exponential(1.0), [1e3], reps, _rng(seed, 9))
    val = float(np.asarray(out)[0])
    return CheckResult(9, "max(X, Y) tail normalization", 0.8 <= val <= 1.2, f"z^gamma (1 - H(z)) = {val:.4f} at z=1e3 (in [0.8, 1.2])")


# -- 10 ----------------------------------------------------------------------


CONSERVATION_PRESETS = ("finite-mean-subcritical", "renewal-only")


def check_conservation(seed: int = 0, scale: float = 1.0, extra: dict | None = None) -> CheckResult:
    reps = _reps(10_000, scale)
    models = {name: preset_model(name) for name in CONSERVATION_PRESETS}
    skipped = []
    for name, model in (extra or {}).items():
        why = _guarded(model, name)
        if why is None and any(getattr(law, "beta", 1.0) < 1.0 for law in model.offspring):
            why = f"{name}: infinite-variance offspring (beta < 1), SE test not applicable"
        if why:
            skipped.append(why)
        else:
            models[name] = model
    worst, parts = 0.0, []
    for k, (name, model) in enumerate(models.items()):
        mom = branching.mean_population(model, 0, [5.0, 20.0, 80.0], reps, _rng(seed, 10, k))
        z = [abs(m.mean - 1.0) / m.se for m in mom]
        worst = max(worst, max(z))
        parts.append(f"{name}: " + ", ".join(f"{m.mean:.3f}" for m in mom))
    return CheckResult(
        10, "critical population conservation", worst <= 4.0,
        f"max |mean - 1|/SE = {worst:.2f} (<= 4); " + "; ".join(parts),
        warnings=_low_precision(reps) + skipped,
    )


# -- 11 ----------------------------------------------------------------------


TREND_PRESETS = ("finite-mean-subcritical", "case-a")
TREND_T = (25.0, 50.0, 100.0, 200.0)


def check_extinction_trend(seed: int = 0, scale: float = 1.0, extra: dict | None = None) -> CheckResult:
    reps = _reps(200_000, scale)
    models = {name: preset_model(name) for name in TREND_PRESETS}
    skipped = []
    for name, model in (extra or {}).items():
        why = _guarded(model, name)
        if why:
            skipped.append(why)
        else:
            models[name] = model
    ok, parts = True, []
    for k, (name, model) in enumerate(models.items()):
        si = branching.survival_integral(model, 0, TREND_T, 1.0, 3.0, reps, _rng(seed, 11, k))
        dec = si.decreasing(nse=2.0)
        ok &= dec
        parts.append(f"{name}: " + " > ".join(f"{e:.3f}" for e in si.estimate) + ("" if dec else " (not decreasing)"))
    return CheckResult(11, "extinction trend", ok, "; ".join(parts), warnings=_low_precision(reps) + skipped)


# -- 12 ----------------------------------------------------------------------


def d_plus_exact(alpha1: Fraction, alpha: Fraction, gamma: Fraction, beta: Fraction) -> Fraction:
    return gamma / ((beta + 1) * gamma / alpha - 1 / alpha1)


def d_plus_cases() -> list[tuple]:
    """Twenty rational tuples ``(alpha1, alpha, gamma, beta)`` including boundary cases."""
    F = Fraction
    cases = [
        (F(3), F(1), F(1, 2), F(1)),
        (F(2), F(1), F(9, 10), F(1, 2)),
        (F(6), F(2), F(9, 10), F(1, 2)),
        (F(3), F(1), F(9, 10), F(1, 2)),
        (F(2), F(1), F(1, 2), F(1, 2)),
        (F(2), F(1, 2), F(1, 2), F(1, 3)),
        (F(8, 5), F(6, 5), F(4, 5), F(3, 10)),
        (F(7, 4), F(1), F(2, 3), F(4, 5)),
        (F(2), F(3, 2), F(1), F(1)),
        (F(19, 10), F(1, 2), F(1, 3), F(1, 2)),
        (F(3, 2), F(1), F(7, 10), F(9, 10)),
        (F(2), F(4, 5), F(3, 5), F(2, 5)),
    ]
    # boundary gamma / alpha = 1 / alpha1, where d_+ = alpha1 gamma / beta
    for a1, g, b in ((F(2), F(1, 2), F(1)), (F(3, 2), F(2, 3), F(1, 2)), (F(5, 4), F(4, 5), F(3, 10)),
                     (F(2), F(9, 10), F(4, 5)), (F(8, 5), F(5, 8), F(1, 5)), (F(3), F(1, 3), F(1, 2)),
                     (F(7, 5), F(1, 2), F(7, 10)), (F(9, 5), F(1), F(1))):
        cases.append((a1, a1 * g, g, b))
    return cases


def check_d_plus(seed: int = 0, scale: float = 1.0) -> CheckResult:
    worst = 0.0
    cases = d_plus_cases()
    for a1, a, g, b in cases:
        exact = d_plus_exact(a1, a, g, b)
        got = dimensions_from(float(a1), float(a), float(g), float(b)).case_b2
        worst = max(worst, abs(got - float(exact)))
        if g / a == 1 / a1:
            worst = max(worst, abs(got - float(a1 * g / b)))
    return CheckResult(12, "d_plus regression", worst <= 1e-9, f"max error {worst:.1e} on {len(cases)} tuples (<= 1e-9)")


CHECKS = (
    check_spectral,
    check_beta,
    check_survival_exponent,
    check_renewal_count,
    check_occupation_decay,
    check_domination,
    check_solver_oracle,
    check_self_similarity,
    check_max_law,
    check_conservation,
    check_extinction_trend,
    check_d_plus,
)
_MODEL_CHECKS = {check_domination, check_conservation, check_extinction_trend}


def run_check(fn, seed: int = 0, scale: float = 1.0, extra: dict | None = None) -> CheckResult:
    start = time.perf_counter()
    res = fn(seed, scale, extra) if fn in _MODEL_CHECKS else fn(seed, scale)
    res.elapsed = time.perf_counter() - start
    return res


def run_acceptance(seed: int = 0, scale: float = 1.0, extra: dict | None = None, only=None, echo=None) -> list[CheckResult]:
    """Run the suite (or the checks numbered in ``only``); ``echo`` receives each result line."""
    out = []
    for k, fn in enumerate(CHECKS, start=1):
        if only is not None and k not in only:
            continue
        res = run_check(fn, seed, scale, extra)
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out


def guard_model(model) -> None:
    """Raise :class:`HypothesisViolation` if any theorem hypothesis fails for ``model``."""
    bad = [why for ok, why in hypothesis_checks(model).values() if not ok]
    if bad:
        raise HypothesisViolation("; ".join(bad))


def verify(cfg, echo=None) -> list[CheckResult]:
    """Run the suite at ``cfg.acceptance_scale``, adding ``cfg.model`` to the model-dependent checks."""
    standard = {preset_model(n) for n in set(CONSERVATION_PRESETS) | set(TREND_PRESETS)}
    extra = {} if cfg.model in standard else {cfg.name: cfg.model}
    return run_acceptance(seed=cfg.seed, scale=cfg.acceptance_scale, extra=extra, echo=echo)


def summary(results) -> dict:
    return {
        "passed": sum(r.status == "PASS" for r in results),
        "failed": sum(r.status == "FAIL" for r in results),
        "skipped": sum(r.status == "SKIP" for r in results),
        "checks": [r.to_dict() for r in results],
    }
