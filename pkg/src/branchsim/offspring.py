"""Multitype offspring laws and generating-function machinery.

Two kinds of law are supported:

* :class:`FactorizedOffspring` draws a total child count from
  ``h(s) = s + c (1 - s)^(1 + beta)`` and then assigns each child a type
  independently from a probability row. Its generating function is
  ``f_i(s) = h(<row_i, s>)`` and it is critical because ``h'(1) = 1``.
* :class:`ExplicitOffspring` is a finite table of child-type count vectors.

Everything that needs ``1 - f(1 - z)`` for small ``z`` goes through
``remainder`` (``M z - (1 - f(1 - z))``) to avoid cancellation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, NamedTuple, Sequence

import numpy as np
from scipy import signal

from .errors import GridMismatch, NotInLambda, OutOfDomain, PreconditionError
from .stats import SlopeFit, loglog_slope

TABLE_MAX = 1 << 20
TRUNCATION_MASS = 1e-12


class OffspringLaw:
    kind: ClassVar[str] = ""

    @property
    def K(self) -> int:
        raise NotImplementedError

    def mean_row(self) -> np.ndarray:
        """Expected number of children of each type."""
        raise NotImplementedError

    def gf(self, s: np.ndarray) -> np.ndarray:
        """Generating function at ``s`` of shape ``(..., K)``."""
        raise NotImplementedError

    def remainder(self, z: np.ndarray) -> np.ndarray:
        """``<m, z> - (1 - f(1 - z))``, computed without cancellation."""
        raise NotImplementedError

    def one_minus_gf(self, z: np.ndarray) -> np.ndarray:
        """``1 - f(1 - z)``."""
        z = np.asarray(z, dtype=float)
        return z @ self.mean_row() - self.remainder(z)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """``size`` independent child-count vectors, shape ``(size, K)``."""
        raise NotImplementedError


@dataclass(frozen=True)
class FactorizedOffspring(OffspringLaw):
    """Critical count law ``h(s) = s + c (1-s)^(1+beta)`` with i.i.d. child types.

    ``c`` must lie in ``(0, 1/(1+beta)]`` so that every coefficient of ``h``
    is a probability. ``c = 1/2, beta = 1`` is binary splitting.
    """

    beta: float
    c: float
    type_row: tuple[float, ...] = (1.0,)
    kind: ClassVar[str] = "factorized"

    def __post_init__(self):
        object.__setattr__(self, "type_row", tuple(float(x) for x in self.type_row))
        if not 0 < self.beta <= 1:
            raise PreconditionError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 < self.c <= 1 / (1 + self.beta) + 1e-15:
            raise PreconditionError(f"c must be in (0, 1/(1+beta)], got {self.c}")
        row = np.asarray(self.type_row)
        if np.any(row < 0) or abs(row.sum() - 1) > 1e-12:
            raise PreconditionError("type_row must be a probability vector")

    @property
    def K(self) -> int:
        return len(self.type_row)

    def mean_row(self) -> np.ndarray:
        return np.asarray(self.type_row)

    def h(self, s):
        s = np.asarray(s, dtype=float)
        return s + self.c * (1.0 - s) ** (1.0 + self.beta)

    def gf(self, s):
        return self.h(np.asarray(s, dtype=float) @ self.mean_row())

    def remainder(self, z):
        y = np.asarray(z, dtype=float) @ self.mean_row()
        return self.c * np.maximum(y, 0.0) ** (1.0 + self.beta)

    @cached_property
    def count_table(self) -> tuple[np.ndarray, float]:
        """Cumulative probabilities of the child count and the untabulated mass.

        The coefficients of ``h`` are ``p_0 = c``, ``p_1 = 1 - c(1+beta)`` and
        ``p_k = c (-1)^k binom(1+beta, k)`` for ``k >= 2`` (all nonnegative).
        The table stops where the cumulative mass exceeds ``1 - 1e-12`` or at
        ``TABLE_MAX`` terms, whichever comes first.
        """
        b = self.beta
        if b == 1.0:
            p = np.array([self.c, 1.0 - 2.0 * self.c, self.c])
        else:
            ks = np.arange(2, TABLE_MAX, dtype=float)
            ratios = (ks[:-1] - 1.0 - b) / (ks[:-1] + 1.0)
            tail = np.empty(ks.size)
            tail[0] = (1.0 + b) * b / 2.0
            tail[1:] = tail[0] * np.cumprod(ratios)
            p = np.concatenate([[self.c, 1.0 - self.c * (1.0 + b)], self.c * tail])
        cum = np.cumsum(p)
        cut = int(np.searchsorted(cum, 1.0 - TRUNCATION_MASS, side="left"))
        if cut < cum.size:
            cum = cum[: cut + 1].copy()
            cum[-1] = 1.0  # residual mass lumped on the truncation index
            return cum, 0.0
        return cum, float(max(0.0, 1.0 - cum[-1]))

    def sample_counts(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Total child counts by inverse CDF.

        Beyond the tabulated range the count tail ``P(N > k)`` is continued as
        ``R (k / k0)^-(1 + beta)``, anchored at the exact untabulated mass ``R``
        at the last tabulated index ``k0``; this is the leading asymptotics of
        the coefficients of ``h``.
        """
        cum, resid = self.count_table
        u = rng.random(size)
        k = np.searchsorted(cum, u, side="right")
        over = k >= cum.size
        if np.any(over):
            k0 = cum.size - 1
            r = 1.0 - u[over]
            k[over] = np.floor(k0 * (resid / np.maximum(r, 1e-300)) ** (1.0 / (1.0 + self.beta))).astype(np.int64)
            k[over] = np.maximum(k[over], k0 + 1)
        return k.astype(np.int64)

    def sample(self, rng, size):
        n = self.sample_counts(rng, size)
        if self.K == 1:
            return n[:, None]
        return rng.multinomial(n, self.type_row)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta": self.beta, "c": self.c, "type_row": list(self.type_row)}


@dataclass(frozen=True)
class ExplicitOffspring(OffspringLaw):
    """Finite table ``{(k_1, ..., k_K): probability}``."""

    table: dict = field(default_factory=dict)
    kind: ClassVar[str] = "explicit"

    def __post_init__(self):
        if not self.table:
            raise PreconditionError("empty offspring table")
        vecs = np.array([tuple(int(c) for c in k) for k in self.table], dtype=np.int64)
        probs = np.array([float(v) for v in self.table.values()])
        if vecs.ndim != 2 or np.any(vecs < 0):
            raise PreconditionError("table keys must be nonnegative count vectors of equal length")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise PreconditionError("table probabilities must be nonnegative and sum to 1")
        probs = probs / probs.sum()
        object.__setattr__(self, "_vecs", vecs)
        object.__setattr__(self, "_probs", probs)
        object.__setattr__(self, "_cum", np.cumsum(probs))

    @property
    def K(self) -> int:
        return self._vecs.shape[1]

    @property
    def total_probability(self) -> float:
        return float(self._probs.sum())

    def mean_row(self):
        return self._probs @ self._vecs

    def gf(self, s):
        s = np.asarray(s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            logs = np.log(s)
            # 0**0 = 1: zero exponents contribute nothing
            terms = np.where(self._vecs == 0, 0.0, self._vecs * logs[..., None, :])
        return np.exp(terms.sum(-1)) @ self._probs

    def remainder(self, z):
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            l1p = np.log1p(-z)
            expo = np.where(self._vecs == 0, 0.0, self._vecs * l1p[..., None, :]).sum(-1)
        lin = (self._vecs * z[..., None, :]).sum(-1)
        return (lin + np.expm1(expo)) @ self._probs

    def sample(self, rng, size):
        idx = np.searchsorted(self._cum, rng.random(size), side="right")
        return self._vecs[np.minimum(idx, len(self._probs) - 1)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "table": [[list(map(int, k)), float(p)] for k, p in self.table.items()],
        }


def offspring_from_dict(data: dict) -> OffspringLaw:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind == "factorized":
        return FactorizedOffspring(**data)
    if kind == "explicit":
        return ExplicitOffspring({tuple(k): p for k, p in data["table"]})
    raise PreconditionError(f"unknown offspring kind {kind!r}")


# -- generating functions ----------------------------------------------------


def _check_s(s, K):
    s = np.asarray(s, dtype=float)
    if s.shape[-1:] != (K,):
        raise PreconditionError(f"expected last dimension {K}")
    if np.any(s < 0) or np.any(s > 1) or np.any(np.isnan(s)):
        raise OutOfDomain("generating functions are evaluated on [0, 1]^K")
    return s


def gf_eval(laws: Sequence[OffspringLaw], s) -> np.ndarray:
    """``(f_1(s), ..., f_K(s))``."""
    s = _check_s(s, len(laws))
    return np.stack([law.gf(s) for law in laws], axis=-1)


def one_minus_gf_eval(laws, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.stack([law.one_minus_gf(z) for law in laws], axis=-1)


def remainder_eval(laws, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return np.stack([law.remainder(z) for law in laws], axis=-1)


def gf_iterate(laws: Sequence[OffspringLaw], n: int, s0) -> np.ndarray:
    """Iterates ``f_0 = s0, f_{k+1} = f(f_k)``; returns shape ``(n + 1, K)``."""
    if n < 0:
        raise PreconditionError("n must be >= 0")
    s = _check_s(s0, len(laws))
    out = np.empty((n + 1, len(laws)))
    out[0] = s
    for k in range(n):
        s = np.clip(gf_eval(laws, s), 0.0, 1.0)
        out[k + 1] = s
    return out


def survival_probabilities(laws: Sequence[OffspringLaw], n_max: int) -> np.ndarray:
    """``1 - f_n(0)`` for ``n = 0..n_max``, iterated as ``q -> 1 - f(1 - q)``."""
    K = len(laws)
    q = np.ones(K)
    out = np.empty((n_max + 1, K))
    out[0] = q
    for k in range(n_max):
        q = np.clip(one_minus_gf_eval(laws, q), 0.0, 1.0)
        out[k + 1] = q
    return out


class SurvivalSequence(NamedTuple):
    n: np.ndarray
    q: np.ndarray  # (n_max + 1, K)
    fits: list  # per-type SlopeFit over the fit window
    curvature: np.ndarray  # quadratic coefficient of the log-log curve, per type


def survival_sequence(laws, n_max: int, window: tuple[float, float] | None = None) -> SurvivalSequence:
    """Survival probabilities of the embedded Galton-Watson process and their decay exponent.

    The slope is fitted on 40 log-spaced generations inside ``window``
    (default: the last decade ``[n_max/10, n_max]``). For pure power decay it
    approaches ``-1/beta``.
    """
    if n_max < 100:
        raise PreconditionError("survival_sequence needs n_max >= 100")
    q = survival_probabilities(laws, n_max)
    lo, hi = window if window is not None else (n_max / 10, n_max)
    ns = np.unique(np.round(np.geomspace(lo, hi, 40)).astype(int))
    fits, curv = [], []
    for i in range(len(laws)):
        fits.append(loglog_slope(ns, q[ns, i]))
        curv.append(np.polyfit(np.log(ns), np.log(q[ns, i]), 2)[0])
    return SurvivalSequence(np.arange(n_max + 1), q, fits, np.asarray(curv))


def sample_offspring(law: OffspringLaw, rng: np.random.Generator, size: int | None = None):
    """Child-count vector(s) of one parent; shape ``(K,)`` or ``(size, K)``."""
    if size is None:
        return law.sample(rng, 1)[0]
    return law.sample(rng, size)


def in_lambda(laws, s, tol: float = 1e-12) -> bool:
    """Membership in ``{s : f(s) >= s}``."""
    s = _check_s(s, len(laws))
    return bool(np.all(gf_eval(laws, s) >= s - tol))


# -- matrix convolution and the comparison bounds ----------------------------


def matrix_convolution(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    r"""Grid version of ``c_ij(t) = sum_k int_0^t a_ik(t - s) b_kj(ds)``.

    ``A`` has shape ``(K, K, T)``; ``B`` has shape ``(K, K, T)`` or ``(K, T)``
    (a vector of time functions). Both are sampled on the same uniform grid
    starting at 0. Functions vanish for negative times, so ``b`` contributes
    an atom ``b(0)`` at the origin; later Stieltjes increments are paired with
    the average of ``a`` at the two cell ends.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 2
    Bm = B[:, None, :] if vector else B
    if A.ndim != 3 or Bm.ndim != 3:
        raise GridMismatch("A must be (K, K, T) and B (K, K, T) or (K, T)")
    if A.shape[-1] != Bm.shape[-1]:
        raise GridMismatch(f"time grids differ: {A.shape[-1]} vs {Bm.shape[-1]}")
    if A.shape[1] != Bm.shape[0]:
        raise GridMismatch("inner dimensions differ")
    T = A.shape[-1]
    dB = np.diff(Bm, axis=-1, prepend=0.0)
    out = A[:, :, None, :] * dB[None, :, :, 0:1]  # atom at s = 0
    out = out.sum(axis=1)
    if T > 1:
        Abar = 0.5 * (A[..., 1:] + A[..., :-1])
        I, Kin, J = A.shape[0], A.shape[1], Bm.shape[1]
        for i in range(I):
            for j in range(J):
                acc = np.zeros(T - 1)
                for k in range(Kin):
                    if not Abar[i, k].any() or not dB[k, j, 1:].any():
                        continue
                    acc += signal.convolve(Abar[i, k], dB[k, j, 1:])[: T - 1]
                out[i, j, 1:] += acc
    return out[:, 0, :] if vector else out


def _uniform_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise GridMismatch("time grid must be 1-D, start at 0 and have >= 2 points")
    dt = np.diff(t)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * dt[0]:
        raise GridMismatch("time grid must be uniform and increasing")
    return t


def lifetime_cdf_grid(lifetimes, t_grid) -> np.ndarray:
    return np.stack([law.cdf(np.asarray(t_grid, dtype=float)) for law in lifetimes])


def mean_matrix_powers(M: np.ndarray, lifetimes, t_grid, n: int) -> list[np.ndarray]:
    """``[M_Gamma^0, ..., M_Gamma^n]`` on the grid, ``M_Gamma^1 = (m_ij Gamma_i(t))``."""
    t = _uniform_grid(t_grid)
    K = M.shape[0]
    G = lifetime_cdf_grid(lifetimes, t)
    unit = np.zeros((K, K, t.size))
    unit[np.arange(K), np.arange(K), :] = 1.0
    powers = [unit]
    if n >= 1:
        one = M[:, :, None] * G[:, None, :]
        powers.append(one)
        for _ in range(1, n):
            powers.append(matrix_convolution(one, powers[-1]))
    return powers


class ComparisonBounds(NamedTuple):
    t: np.ndarray
    lower: np.ndarray  # (K, T)
    upper: np.ndarray  # (K, T)


def comparison_bounds(model, n: int, s, t_grid) -> ComparisonBounds:
    r"""Lower/upper envelopes for ``1 - F(t; s)`` from ``n`` generations.

    ``lower = 1 - f_n(s) - M_Gamma^n * [(1 - s) (x) Gamma](t)`` and
    ``upper = 1 - f_n(s) + sum_{j<n} M_Gamma^j * [(1 - s) (x) (1 - Gamma)](t)``.

    Raises
    ------
    NotInLambda
        If ``f(s) >= s`` fails in some component.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    laws = model.offspring
    s = _check_s(s, len(laws))
    if not in_lambda(laws, s):
        raise NotInLambda(f"f(s) >= s fails at s = {s}")
    t = _uniform_grid(t_grid)
    G = lifetime_cdf_grid(model.lifetimes, t)
    fn = gf_iterate(laws, n, s)[-1]
    base = (1.0 - fn)[:, None] * np.ones(t.size)
    powers = mean_matrix_powers(model.mean_matrix, model.lifetimes, t, n)
    one_minus_s = (1.0 - s)[:, None]
    lower = base - matrix_convolution(powers[n], one_minus_s * G)
    upper = base.copy()
    surv_vec = one_minus_s * (1.0 - G)
    for j in range(n):
        upper += matrix_convolution(powers[j], surv_vec)
    return ComparisonBounds(t, lower, upper)


class LifetimeCheck(NamedTuple):
    ok: bool
    margin: float
    slopes: np.ndarray
    n: np.ndarray
    log_ratio: np.ndarray  # (len(n), K)
    required_tail_exponent: float


def lifetime_condition_check(model, beta: float, n_max: int = 10_000) -> LifetimeCheck:
    """Trend of ``n (1 - Gamma_i(n)) / <v, 1 - f_n(0)>`` on ``n in [100, n_max]``.

    The condition holds when every per-type log-log slope is negative; the
    margin is minus the largest slope. ``required_tail_exponent`` is the
    sufficient decay order ``1 + 1/beta`` for laws of the factorized family.
    """
    if any(law.heavy for law in model.lifetimes):
        raise PreconditionError("lifetime condition check needs finite-mean lifetimes only")
    if n_max <= 100:
        raise PreconditionError("n_max must exceed 100")
    v = model.spectral.v
    q = survival_probabilities(model.offspring, n_max)
    ns = np.unique(np.round(np.geomspace(100, n_max, 20)).astype(int))
    denom = np.log(q[ns] @ v)
    log_ratio = np.stack(
        [np.log(ns) + law.logsf(ns.astype(float)) - denom for law in model.lifetimes], axis=1
    )
    slopes = np.array([np.polyfit(np.log(ns), log_ratio[:, i], 1)[0] for i in range(log_ratio.shape[1])])
    return LifetimeCheck(bool(np.all(slopes < 0)), float(-slopes.max()), slopes, ns, log_ratio, 1.0 + 1.0 / beta)
