"""Small estimators shared by every Monte Carlo experiment.

Tail probabilities get Wilson intervals (they sit near zero most of the
time), exponents come from ordinary least squares on log-log data, and
replica results are reduced through mergeable summaries so that work can be
split over workers in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as _sps

from .errors import EmptySample, InvalidCounts, KindMismatch, NonPositiveData, PreconditionError

Z95 = 1.959963984540054


@dataclass(frozen=True)
class TailEstimate:
    """Binomial proportion with a 95% Wilson interval."""

    successes: int
    trials: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    low_precision: bool = False

    @property
    def se(self) -> float:
        """Plug-in standard error sqrt(p(1-p)/n)."""
        return math.sqrt(self.p_hat * (1.0 - self.p_hat) / self.trials)

    def at_most(self, bound: float, nse: float = 3.0) -> bool:
        """One-sided check ``p_hat <= bound + nse * se``."""
        return self.p_hat <= bound + nse * self.se

    def to_dict(self) -> dict:
        return {
            "successes": self.successes,
            "trials": self.trials,
            "estimate": self.p_hat,
            "ci_lo": self.ci_lo,
            "ci_hi": self.ci_hi,
            "se": self.se,
            "low_precision": self.low_precision,
        }


def wilson_ci(successes: int, trials: int, z: float = Z95) -> TailEstimate:
    """Wilson score interval for ``successes`` out of ``trials``.

    Raises
    ------
    InvalidCounts
        If ``trials < 1`` or ``successes`` is outside ``[0, trials]``.
    """
    successes, trials = int(successes), int(trials)
    if trials < 1 or successes < 0 or successes > trials:
        raise InvalidCounts(f"need 0 <= successes <= trials, trials >= 1; got {successes}/{trials}")
    p = successes / trials
    z2n = z * z / trials
    center = (p + z2n / 2.0) / (1.0 + z2n)
    half = z / (1.0 + z2n) * math.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials))
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return TailEstimate(successes, trials, p, min(lo, p), max(hi, p), trials < 100)


def proportion(indicator: np.ndarray) -> TailEstimate:
    """Wilson estimate from a boolean array of replica outcomes."""
    indicator = np.asarray(indicator, dtype=bool)
    return wilson_ci(int(indicator.sum()), indicator.size)


def nonincreasing(estimates: Sequence[TailEstimate], nse: float = 2.0) -> bool:
    """True unless some consecutive pair increases by more than ``nse`` pooled SEs."""
    for a, b in zip(estimates, estimates[1:]):
        if b.p_hat - a.p_hat > nse * math.hypot(a.se, b.se):
            return False
    return True


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    n_points: int

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def loglog_slope(x, y) -> SlopeFit:
    """Least-squares line through ``(log x, log y)``.

    Parameters
    ----------
    x, y : array_like
        Positive abscissae and ordinates, at least three points.

    Returns
    -------
    SlopeFit
        Slope, intercept (natural log scale), slope standard error and R^2.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise PreconditionError("x and y must have the same length")
    if x.size < 3:
        raise PreconditionError("loglog_slope needs at least 3 points")
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise NonPositiveData("log-log regression needs strictly positive data")
    lx, ly = np.log(x), np.log(y)
    mx, my = lx.mean(), ly.mean()
    sxx = float(np.sum((lx - mx) ** 2))
    if sxx == 0.0:
        raise PreconditionError("x values must not all coincide")
    slope = float(np.sum((lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    resid = ly - (intercept + slope * lx)
    sse = float(np.sum(resid**2))
    sst = float(np.sum((ly - my) ** 2))
    r2 = 1.0 if sst == 0.0 else max(0.0, min(1.0, 1.0 - sse / sst))
    stderr = math.sqrt(sse / (x.size - 2) / sxx) if x.size > 2 else 0.0
    return SlopeFit(slope, intercept, stderr, r2, int(x.size))


class KSResult(NamedTuple):
    statistic: float
    pvalue: float


def ks_two_sample(a, b) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, pooled, side="right") / a.size
    cdf_b = np.searchsorted(b, pooled, side="right") / b.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    en = a.size * b.size / (a.size + b.size)
    pval = float(_sps.kstwobign.sf(math.sqrt(en) * stat))
    return KSResult(stat, min(1.0, max(0.0, pval)))


# -- mergeable summaries -----------------------------------------------------


@dataclass(frozen=True)
class Moments:
    """count / sum / sum of squares / extremes of a real sample."""

    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    min: float = math.inf
    max: float = -math.inf

    @classmethod
    def of(cls, values) -> "Moments":
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return cls()
        return cls(int(v.size), float(v.sum()), float(np.dot(v, v)), float(v.min()), float(v.max()))

    def merge(self, other: "Moments") -> "Moments":
        return merge(self, other)

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else math.nan

    @property
    def var(self) -> float:
        """Unbiased sample variance."""
        if self.count < 2:
            return math.nan
        return max(0.0, (self.total_sq - self.total**2 / self.count) / (self.count - 1))

    @property
    def se(self) -> float:
        return math.sqrt(self.var / self.count) if self.count > 1 else math.nan


@dataclass(frozen=True)
class Counts:
    """Success/trial pair; merges into a pooled binomial sample."""

    successes: int = 0
    trials: int = 0

    @classmethod
    def of(cls, indicator) -> "Counts":
        ind = np.asarray(indicator, dtype=bool)
        return cls(int(ind.sum()), int(ind.size))

    def merge(self, other: "Counts") -> "Counts":
        return merge(self, other)

    def estimate(self) -> TailEstimate:
        return wilson_ci(self.successes, self.trials)


MergeableSummary = Moments | Counts


def merge(a: MergeableSummary, b: MergeableSummary) -> MergeableSummary:
    """Combine two summaries of the same kind.

    Raises
    ------
    KindMismatch
        When a :class:`Moments` is merged with a :class:`Counts`.
    """
    if type(a) is not type(b):
        raise KindMismatch(f"cannot merge {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, Counts):
        return Counts(a.successes + b.successes, a.trials + b.trials)
    return Moments(
        a.count + b.count,
        a.total + b.total,
        a.total_sq + b.total_sq,
        min(a.min, b.min),
        max(a.max, b.max),
    )


def merge_all(parts) -> MergeableSummary:
    """Left fold of :func:`merge` in the given (canonical) order."""
    parts = list(parts)
    if not parts:
        raise EmptySample("nothing to merge")
    out = parts[0]
    for p in parts[1:]:
        out = merge(out, p)
    return out
