"""Model parameterization, spectral data of the mean matrix and critical dimensions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DegenerateOffspring,
    InvalidAlpha,
    InvalidGamma,
    NoConvergence,
    NonStochasticMatrix,
    NotErgodic,
    PreconditionError,
)
from .lifetimes import LifetimeLaw, law_from_dict
from .offspring import FactorizedOffspring, OffspringLaw, offspring_from_dict, remainder_eval
from .stats import SlopeFit, loglog_slope

REGIMES = ("FiniteMean", "CaseA", "CaseB1", "CaseB2")


def build_mean_matrix(offspring: Sequence[OffspringLaw]) -> np.ndarray:
    """``M[i, j]`` = expected number of type-``j`` children of a type-``i`` parent.

    Raises
    ------
    NonStochasticMatrix
        If a row sum deviates from 1 by more than 1e-9.
    NotErgodic
        If no power ``M^m`` with ``m <= K^2`` is strictly positive.
    """
    K = len(offspring)
    if K < 1:
        raise PreconditionError("need at least one type")
    rows = [np.asarray(law.mean_row(), dtype=float) for law in offspring]
    if any(r.shape != (K,) for r in rows):
        raise PreconditionError(f"every offspring law must have {K} types")
    M = np.vstack(rows)
    check_stochastic(M)
    check_ergodic(M)
    return M


def check_stochastic(M: np.ndarray, tol: float = 1e-9) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NonStochasticMatrix("mean matrix must be square")
    if np.any(M < 0) or np.any(np.abs(M.sum(axis=1) - 1.0) > tol):
        raise NonStochasticMatrix(f"rows must be nonnegative and sum to 1; row sums {M.sum(axis=1)}")


def check_ergodic(M: np.ndarray) -> None:
    """Primitivity certificate: ``M^(K^2)`` has all entries positive."""
    K = M.shape[0]
    P = (np.asarray(M) > 0).astype(float)
    # boolean powers so tiny entries cannot underflow
    power = np.eye(K)
    for _ in range(max(1, K * K)):
        power = np.minimum(power @ P, 1.0)
    if not np.all(power > 0):
        raise NotErgodic("mean matrix is not irreducible and aperiodic")


@dataclass(frozen=True)
class SpectralData:
    M: np.ndarray
    p_star: np.ndarray
    v: np.ndarray
    u: np.ndarray
    rho: float
    lambda2: float
    iterations: int
    residuals: dict
    beta: float | None = None
    D: float | None = None

    def to_dict(self) -> dict:
        return {
            "p_star": self.p_star.tolist(),
            "v": self.v.tolist(),
            "u": self.u.tolist(),
            "rho": self.rho,
            "lambda2": self.lambda2,
            "beta": self.beta,
            "D": self.D,
            "residuals": self.residuals,
        }


def spectral(M, tol: float = 1e-12, budget: int = 1_000_000) -> SpectralData:
    """Stationary law, normed eigenvectors and Perron root of a stochastic ``M``.

    The stationary law comes from power iteration, accelerated by repeated
    squaring of ``M`` (each squaring doubles the effective iteration count,
    which is what ``budget`` limits) and polished by plain steps
    ``p <- p M``. Since ``M`` is stochastic, ``u = 1/K`` and ``v = K p*``.
    ``lambda2`` is the spectral radius of the deflated matrix ``M - 1 p*``.
    """
    M = np.asarray(M, dtype=float)
    check_stochastic(M)
    check_ergodic(M)
    K = M.shape[0]
    P = M.copy()
    steps = 1
    while steps < budget:
        if np.max(np.ptp(P, axis=0)) <= tol:
            break
        P = P @ P
        P /= P.sum(axis=1, keepdims=True)
        steps *= 2
    p = P.mean(axis=0)
    p /= p.sum()
    for _ in range(1000):
        nxt = p @ M
        nxt /= nxt.sum()
        done = np.max(np.abs(nxt - p)) <= tol
        p = nxt
        steps += 1
        if done:
            break
    u = np.full(K, 1.0 / K)
    v = K * p
    rho = float((p @ M).sum() / p.sum())
    residuals = {
        "vM-v": float(np.max(np.abs(v @ M - v))),
        "Mu-u": float(np.max(np.abs(M @ u - u))),
        "<v,u>-1": float(abs(v @ u - 1.0)),
        "sum(u)-1": float(abs(u.sum() - 1.0)),
        "rho-1": float(abs(rho - 1.0)),
        "p*M-p*": float(np.max(np.abs(p @ M - p))),
    }
    if max(residuals.values()) > 1e-10:
        raise NoConvergence(f"eigen-solve residuals {residuals} after {steps} iterations")
    lam2 = float(np.max(np.abs(np.linalg.eigvals(M - np.outer(np.ones(K), p))))) if K > 1 else 0.0
    return SpectralData(M, p, v, u, rho, lam2, steps, residuals)


@dataclass(frozen=True)
class ModelSpec:
    """Complete parameterization of the multitype particle system.

    Type index 0 plays the role of the (optional) long-living type: at most
    one lifetime law may have infinite mean, and it must be the first.
    """

    d: int
    alphas: tuple
    lifetimes: tuple
    offspring: tuple
    intensities: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alphas", tuple(float(a) for a in self.alphas))
        object.__setattr__(self, "lifetimes", tuple(self.lifetimes))
        object.__setattr__(self, "offspring", tuple(self.offspring))
        K = len(self.alphas)
        if not self.intensities:
            object.__setattr__(self, "intensities", (1.0,) * K)
        object.__setattr__(self, "intensities", tuple(float(x) for x in self.intensities))
        if K < 1:
            raise PreconditionError("K must be >= 1")
        if int(self.d) != self.d or self.d < 1:
            raise PreconditionError("d must be a positive integer")
        object.__setattr__(self, "d", int(self.d))
        if not all(0 < a <= 2 for a in self.alphas):
            raise InvalidAlpha(f"stability indices must lie in (0, 2], got {self.alphas}")
        if not (len(self.lifetimes) == len(self.offspring) == len(self.intensities) == K):
            raise PreconditionError("alphas, lifetimes, offspring and intensities need one entry per type")
        if any(lam < 0 for lam in self.intensities):
            raise PreconditionError("intensities must be nonnegative")
        heavy = [i for i, law in enumerate(self.lifetimes) if law.heavy]
        if len(heavy) > 1 or (heavy and heavy[0] != 0):
            raise PreconditionError("only type 0 may have an infinite-mean lifetime")
        _ = self.mean_matrix  # validates stochasticity and ergodicity

    @property
    def K(self) -> int:
        return len(self.alphas)

    @cached_property
    def mean_matrix(self) -> np.ndarray:
        return build_mean_matrix(self.offspring)

    @cached_property
    def spectral(self) -> SpectralData:
        base = spectral(self.mean_matrix)
        mus = [law.mean for law in self.lifetimes]
        D = float(np.sum(base.u * base.v * mus)) if all(math.isfinite(m) for m in mus) else None
        try:
            beta = offspring_beta(self, base).beta
        except DegenerateOffspring:
            beta = None
        return SpectralData(**{**base.__dict__, "beta": beta, "D": D})

    @property
    def heavy_type(self) -> int | None:
        return 0 if self.lifetimes[0].heavy else None

    @property
    def gamma(self) -> float | None:
        return self.lifetimes[0].gamma if self.heavy_type is not None else None

    @property
    def eta(self) -> float | None:
        """Smallest tail exponent among the finite-mean types (``inf`` for light tails)."""
        others = self.lifetimes[1:] if self.heavy_type is not None else self.lifetimes
        if not others:
            return None
        return float(min(law.tail_exponent for law in others))

    @property
    def alpha_min(self) -> float:
        return min(self.alphas)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "alphas": list(self.alphas),
            "lifetimes": [law.to_dict() for law in self.lifetimes],
            "offspring": [law.to_dict() for law in self.offspring],
            "intensities": list(self.intensities),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        return cls(
            d=data["d"],
            alphas=tuple(data["alphas"]),
            lifetimes=tuple(law_from_dict(x) for x in data["lifetimes"]),
            offspring=tuple(offspring_from_dict(x) for x in data["offspring"]),
            intensities=tuple(data.get("intensities", ())),
        )

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


# -- offspring exponent ------------------------------------------------------


class BetaFit(NamedTuple):
    beta: float
    analytic: bool
    fitted: float
    fit: SlopeFit
    x: np.ndarray
    g: np.ndarray


def offspring_beta(model: ModelSpec, spec: SpectralData | None = None, n_points: int = 25) -> BetaFit:
    """Exponent ``beta`` with ``g(x) = x - <v, 1 - f(1 - u x)>`` behaving like ``x^(1+beta)``.

    ``g`` is evaluated as ``<v, R(u x)>`` with the cancellation-free
    remainder ``R(z) = M z - (1 - f(1 - z))`` on 25 log-spaced points of
    ``[1e-6, 1e-2]``. When every law is factorized the exact answer
    ``min beta_i`` is returned and the fit is kept as a diagnostic.

    Raises
    ------
    DegenerateOffspring
        If ``g(x)`` is not positive somewhere on the grid (linear ``f``).
    """
    spec = spec or spectral(model.mean_matrix)
    x = np.geomspace(1e-6, 1e-2, n_points)
    z = x[:, None] * spec.u[None, :]
    g = remainder_eval(model.offspring, z) @ spec.v
    if np.any(g <= 64 * np.finfo(float).eps * x):
        raise DegenerateOffspring("g(x) vanishes: the offspring generating function is linear")
    fit = loglog_slope(x, g)
    fitted = fit.slope - 1.0
    if all(isinstance(law, FactorizedOffspring) for law in model.offspring):
        return BetaFit(min(law.beta for law in model.offspring), True, fitted, fit, x, g)
    return BetaFit(fitted, False, fitted, fit, x, g)


# -- critical dimensions -----------------------------------------------------


@dataclass(frozen=True)
class CriticalDimensions:
    finite_mean: float
    case_a: float
    case_b1: float
    case_b2: float
    v_mob: float
    alpha_min: float
    regime: str
    alpha1: float = math.nan
    gamma: float = math.nan
    beta: float = math.nan

    @property
    def threshold(self) -> float:
        """Dimension bound of the theorem that applies in ``regime``."""
        return {
            "FiniteMean": self.finite_mean,
            "CaseA": self.case_a,
            "CaseB1": self.case_b1,
            "CaseB2": self.case_b2,
        }[self.regime]

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out["threshold"] = self.threshold
        return out


def d_plus(alpha1: float, alpha: float, gamma: float, beta: float) -> float:
    """``gamma / ((beta + 1) gamma / alpha - 1 / alpha1)``; ``inf`` if the denominator is <= 0."""
    den = (beta + 1.0) * gamma / alpha - 1.0 / alpha1
    return gamma / den if den > 0 else math.inf


def select_regime(heavy: bool, alpha1: float, alpha: float, gamma: float) -> str:
    if not heavy:
        return "FiniteMean"
    if alpha1 == alpha:
        return "CaseA"
    if alpha >= alpha1 * gamma:
        return "CaseB1"
    return "CaseB2"


def dimensions_from(alpha1: float, alpha: float, gamma: float, beta: float, heavy: bool = True) -> CriticalDimensions:
    """All candidate critical dimensions from raw exponents.

    Unlike :func:`critical_dimensions` this does not require a valid
    model, so ``alpha1`` may exceed 2 (useful for checking formulas).
    """
    if not 0 < gamma <= 1:
        raise InvalidGamma(f"gamma must be in (0, 1], got {gamma}")
    if not 0 < beta <= 1:
        raise PreconditionError(f"beta must be in (0, 1], got {beta}")
    if not (alpha > 0 and alpha1 > 0):
        raise InvalidAlpha("stability indices must be positive")
    return CriticalDimensions(
        finite_mean=alpha / beta,
        case_a=alpha * gamma / beta,
        case_b1=alpha1 * gamma / beta,
        case_b2=d_plus(alpha1, alpha, gamma, beta),
        v_mob=max(1.0 / alpha1, gamma / alpha),
        alpha_min=alpha,
        regime=select_regime(heavy, alpha1, alpha, gamma),
        alpha1=alpha1,
        gamma=gamma,
        beta=beta,
    )


def critical_dimensions(model: ModelSpec, beta: float | None = None, gamma: float | None = None) -> CriticalDimensions:
    """Critical dimensions and regime of ``model``.

    ``beta`` defaults to the model's offspring exponent and ``gamma`` to the
    tail exponent of the long-living type (1 when every mean is finite).
    """
    if beta is None:
        beta = model.spectral.beta
    heavy = model.heavy_type is not None
    if gamma is None:
        gamma = model.gamma if heavy else 1.0
    return dimensions_from(model.alphas[0], model.alpha_min, gamma, beta, heavy=heavy)


_RATIONALE = {
    "FiniteMean": "all lifetimes have finite mean",
    "CaseA": "the long-living type is also the most mobile (alpha_1 = alpha)",
    "CaseB1": "the mobility of the first particle type is dominant (alpha >= alpha_1 gamma)",
    "CaseB2": "the second type's mobility is dominant (alpha_1 gamma > alpha)",
}


class RegimeInfo(NamedTuple):
    regime: str
    rationale: str
    dims: CriticalDimensions


def classify_regime(model: ModelSpec, beta: float | None = None) -> RegimeInfo:
    dims = critical_dimensions(model, beta)
    return RegimeInfo(dims.regime, _RATIONALE[dims.regime], dims)


def predicted_decay_exponent(dims: CriticalDimensions, d: int) -> float:
    """Exponent of ``t`` in the survival-integral upper bound for the regime.

    Negative values mean the bound vanishes; the sign flips exactly at the
    regime's critical dimension.
    """
    b, g, a, a1 = dims.beta, dims.gamma, dims.alpha_min, dims.alpha1
    if dims.regime == "FiniteMean":
        return d / a - 1.0 / b
    if dims.regime == "CaseA":
        return d / a - g / b
    if dims.regime == "CaseB1":
        return d / a1 - g / b
    return d * g / a - (d / a1 + g) / (1.0 + b)


def hypothesis_checks(model: ModelSpec, dims: CriticalDimensions | None = None) -> dict:
    """Conditions each extinction theorem needs beyond the dimension bound.

    Returns a mapping ``name -> (holds, description)``.
    """
    dims = dims or critical_dimensions(model)
    d, a = model.d, dims.alpha_min
    out = {"single_heavy_type": (sum(law.heavy for law in model.lifetimes) <= 1, "at most one infinite-mean type")}
    eta = model.eta
    if dims.regime == "CaseA":
        out["eta-1>d/alpha"] = (eta is not None and eta - 1 > d / a, f"eta - 1 > d/alpha with eta={eta}")
    elif dims.regime in ("CaseB1", "CaseB2"):
        ok = eta is not None and dims.gamma * eta > d / a + 1
        out["gamma*eta>d/alpha+1"] = (ok, f"gamma eta > d/alpha + 1 with eta={eta}")
    out["d<threshold"] = (d < dims.threshold, f"d={d} < {dims.regime} threshold {dims.threshold:.6g}")
    return out
