"""Lifetime laws, truncated moments and the two tail inequalities.

Four continuous families are supported. ``ParetoTail`` is the single
long-living law (tail exactly ``(x/x_min)^-gamma``, infinite mean);
``LightPareto``, ``Exponential`` and ``Weibull`` have finite means.

All laws sample by inverting the survival function, which keeps draws exact
far into the tail and makes residual-lifetime sampling (conditioning on
``X > theta``) a one-liner.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import ClassVar, NamedTuple

import numpy as np
from scipy import special

from .errors import EmptySample, InvalidGamma, OutOfDomain, PreconditionError, RegimeViolation


def _check_x(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise OutOfDomain("lifetime laws are defined on x >= 0")
    return arr


def _ret(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


class LifetimeLaw:
    """Common interface; subclasses implement ``sf``, ``isf`` and moments."""

    kind: ClassVar[str] = ""

    # subclasses: _sf(x), _isf(q), mean, _trunc(a), tail_exponent

    def sf(self, x):
        """Tail probability ``1 - Gamma(x)``."""
        arr = _check_x(x)
        return _ret(self._sf(arr), x)

    def cdf(self, x):
        arr = _check_x(x)
        return _ret(1.0 - self._sf(arr), x)

    tail = sf

    def logsf(self, x):
        arr = _check_x(x)
        with np.errstate(divide="ignore"):
            return _ret(self._logsf(arr), x)

    def _logsf(self, x):
        return np.log(self._sf(x))

    def quantile(self, u):
        """Generalized inverse of the CDF on ``[0, 1)``."""
        arr = np.asarray(u, dtype=float)
        if np.any(arr < 0) or np.any(arr >= 1) or np.any(np.isnan(arr)):
            raise OutOfDomain("quantile needs u in [0, 1)")
        return _ret(self._isf(1.0 - arr), u)

    def isf(self, q):
        arr = np.asarray(q, dtype=float)
        if np.any(arr <= 0) or np.any(arr > 1):
            raise OutOfDomain("isf needs q in (0, 1]")
        return _ret(self._isf(arr), q)

    def sample(self, rng: np.random.Generator, size=None):
        q = 1.0 - rng.random(size)  # (0, 1]
        return self._isf(q) if size is not None else float(self._isf(q))

    def sample_residual(self, rng: np.random.Generator, theta: float | np.ndarray, size=None):
        """Remaining lifetime of an individual already aged ``theta``.

        Draws ``X - theta`` with ``X`` conditioned on ``X > theta`` by
        inverting the conditional survival function ``sf(x) / sf(theta)``.
        """
        theta = np.asarray(theta, dtype=float)
        if np.any(theta < 0):
            raise OutOfDomain("age must be nonnegative")
        s_theta = self._sf(theta)
        if np.any(s_theta <= 0):
            raise OutOfDomain("age beyond the support of the lifetime law")
        q = (1.0 - rng.random(size if size is not None else theta.shape)) * s_theta
        out = np.maximum(self._isf(q) - theta, 0.0)
        return out if (size is not None or theta.ndim) else float(out)

    @property
    def finite_mean(self) -> bool:
        return math.isfinite(self.mean)

    @property
    def heavy(self) -> bool:
        return not self.finite_mean

    def truncated_mean(self, a: float) -> float:
        r"""Mean of ``min(X, a)``, i.e. ``int_0^a x dGamma + a (1 - Gamma(a))``."""
        if not a > 0:
            raise PreconditionError("truncation level must be positive")
        return float(self._trunc(float(a)))

    def median(self) -> float:
        return float(self._isf(0.5))

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class ParetoTail(LifetimeLaw):
    """Pure Pareto law: ``1 - Gamma(x) = (x / x_min)^-gamma`` for ``x >= x_min``."""

    gamma: float
    x_min: float = 1.0
    kind: ClassVar[str] = "pareto_tail"

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise InvalidGamma(f"ParetoTail needs gamma in (0, 1], got {self.gamma}")
        if not self.x_min > 0:
            raise PreconditionError("x_min must be positive")

    def _sf(self, x):
        return np.where(x < self.x_min, 1.0, (np.maximum(x, self.x_min) / self.x_min) ** -self.gamma)

    def _logsf(self, x):
        return np.where(x < self.x_min, 0.0, -self.gamma * np.log(np.maximum(x, self.x_min) / self.x_min))

    def _isf(self, q):
        return self.x_min * q ** (-1.0 / self.gamma)

    @property
    def mean(self) -> float:
        return math.inf

    @property
    def tail_exponent(self) -> float:
        return self.gamma

    def _trunc(self, a):
        if a <= self.x_min:
            return a
        g, xm = self.gamma, self.x_min
        if g == 1.0:
            return xm + xm * math.log(a / xm)
        return xm + xm**g * (a ** (1 - g) - xm ** (1 - g)) / (1 - g)


@dataclass(frozen=True)
class LightPareto(LifetimeLaw):
    """Uniform body on ``[0, x_min]`` glued to the tail ``A x^-eta``.

    The mass of the body is ``1 - A x_min^-eta``. Construction requires
    ``(1 + eta) A x_min^-eta >= 1``, which is exactly the condition for the
    bound ``1 - Gamma(x) <= A x^-eta`` to hold for every ``x > 0`` and not
    just beyond ``x_min``.
    """

    eta: float
    A: float = 1.0
    x_min: float = 1.0
    kind: ClassVar[str] = "light_pareto"

    def __post_init__(self):
        if not self.eta > 1:
            raise PreconditionError("LightPareto needs eta > 1")
        if not (self.A > 0 and self.x_min > 0):
            raise PreconditionError("A and x_min must be positive")
        p = self.p_tail
        if p > 1 + 1e-12:
            raise PreconditionError("A * x_min**-eta must not exceed 1")
        if p * (1 + self.eta) < 1 - 1e-12:
            raise PreconditionError(
                "A * x_min**-eta * (1 + eta) must be >= 1 for the tail bound to hold globally"
            )

    @property
    def p_tail(self) -> float:
        return self.A * self.x_min ** (-self.eta)

    def _sf(self, x):
        p = min(self.p_tail, 1.0)
        body = 1.0 - (x / self.x_min) * (1.0 - p)
        tail = self.A * np.maximum(x, self.x_min) ** (-self.eta)
        return np.where(x < self.x_min, body, tail)

    def _isf(self, q):
        p = min(self.p_tail, 1.0)
        tail = (self.A / q) ** (1.0 / self.eta)
        if p >= 1.0:
            return tail
        body = self.x_min * (1.0 - q) / (1.0 - p)
        return np.where(q >= p, body, tail)

    @property
    def mean(self) -> float:
        p = min(self.p_tail, 1.0)
        return self.x_min * (1 + p) / 2 + p * self.x_min / (self.eta - 1)

    @property
    def tail_exponent(self) -> float:
        return self.eta

    def _trunc(self, a):
        p = min(self.p_tail, 1.0)
        if a <= self.x_min:
            return a - (1 - p) * a * a / (2 * self.x_min)
        return self.x_min * (1 + p) / 2 + self.A * (
            self.x_min ** (1 - self.eta) - a ** (1 - self.eta)
        ) / (self.eta - 1)


@dataclass(frozen=True)
class Exponential(LifetimeLaw):
    rate: float = 1.0
    kind: ClassVar[str] = "exponential"

    def __post_init__(self):
        if not self.rate > 0:
            raise PreconditionError("rate must be positive")

    def _sf(self, x):
        return np.exp(-self.rate * x)

    def _logsf(self, x):
        return -self.rate * x

    def _isf(self, q):
        return -np.log(q) / self.rate

    @property
    def mean(self) -> float:
        return 1.0 / self.rate

    @property
    def tail_exponent(self) -> float:
        return math.inf

    def _trunc(self, a):
        return -math.expm1(-self.rate * a) / self.rate


@dataclass(frozen=True)
class Weibull(LifetimeLaw):
    shape: float
    scale: float = 1.0
    kind: ClassVar[str] = "weibull"

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise PreconditionError("Weibull shape and scale must be positive")

    def _sf(self, x):
        return np.exp(-((x / self.scale) ** self.shape))

    def _logsf(self, x):
        return -((x / self.scale) ** self.shape)

    def _isf(self, q):
        return self.scale * (-np.log(q)) ** (1.0 / self.shape)

    @property
    def mean(self) -> float:
        return self.scale * math.gamma(1 + 1 / self.shape)

    @property
    def tail_exponent(self) -> float:
        return math.inf

    def _trunc(self, a):
        k = self.shape
        return self.scale / k * math.gamma(1 / k) * special.gammainc(1 / k, (a / self.scale) ** k)


_KINDS = {cls.kind: cls for cls in (ParetoTail, LightPareto, Exponential, Weibull)}


def law_from_dict(data: dict) -> LifetimeLaw:
    data = dict(data)
    kind = data.pop("kind", None)
    if kind not in _KINDS:
        raise PreconditionError(f"unknown lifetime kind {kind!r}")
    return _KINDS[kind](**data)


def truncated_mean_quad(law: LifetimeLaw, a: float) -> float:
    """Quadrature of ``int_0^a (1 - Gamma(x)) dx``; independent of the closed forms."""
    from scipy import integrate

    pts = [p for p in (getattr(law, "x_min", None),) if p is not None and 0 < p < a]
    val, _ = integrate.quad(lambda x: float(law.sf(x)), 0.0, a, points=pts or None, epsabs=0, epsrel=1e-11, limit=200)
    return val


# -- tail inequalities -------------------------------------------------------


class BoundValue(NamedTuple):
    value: float
    vacuous: bool


def bernstein_bound(t: float, n: float, v: float, kappa: float = 0.0) -> BoundValue:
    """``2 exp(-t^2 / (2 v n + 2 kappa t))``, returned raw.

    The value is not clamped; ``vacuous`` is set when it exceeds 1.
    """
    if t < 0 or n <= 0 or v <= 0 or kappa < 0:
        raise PreconditionError("bernstein_bound needs t >= 0, n > 0, v > 0, kappa >= 0")
    val = 2.0 * math.exp(-(t * t) / (2.0 * v * n + 2.0 * kappa * t))
    return BoundValue(val, val > 1.0)


def nagaev_bound(n: float, x: float, eta: float, A: float, c: float = 1.0) -> BoundValue:
    """``2 n x^-eta A`` for the upper deviation ``S_n - n mu >= x``.

    Only valid in the large-deviation zone ``x >= c n``; ``c`` defaults to 1.
    """
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if x < c * n:
        raise RegimeViolation(f"Nagaev bound needs x >= c*n = {c * n}, got x = {x}")
    val = 2.0 * n * x ** (-eta) * A
    return BoundValue(val, val > 1.0)


def max_law_tail(x_law: ParetoTail, y_law: LifetimeLaw | None, z_grid, reps: int, rng, method: str = "empirical"):
    """Normalized tail ``z^gamma (1 - H(z))`` of ``max{X, Y}``.

    Parameters
    ----------
    x_law : ParetoTail
        Heavy component with tail index ``gamma``.
    y_law : LifetimeLaw or None
        Finite-mean component; ``None`` means ``Y = 0``.
    z_grid : array_like
        Evaluation points.
    reps : int
        Number of draws.
    method : {"empirical", "conditional"}
        ``"empirical"`` samples both variables. ``"conditional"`` samples only
        ``Y`` and uses ``1 - H = 1 - F(z) G(z)`` with the exact ``F``.
    """
    if reps <= 0:
        raise EmptySample("reps must be positive")
    if not isinstance(x_law, ParetoTail):
        raise PreconditionError("X must be a ParetoTail law")
    if y_law is not None and not y_law.finite_mean:
        raise PreconditionError("Y must have finite mean")
    z = np.atleast_1d(np.asarray(z_grid, dtype=float))
    if method == "conditional":
        if y_law is None:
            g = np.ones_like(z)
        else:
            ys = np.sort(y_law.sample(rng, reps))
            g = np.searchsorted(ys, z, side="right") / reps
        tail = 1.0 - x_law.cdf(z) * g
    elif method == "empirical":
        h = x_law.sample(rng, reps)
        if y_law is not None:
            h = np.maximum(h, y_law.sample(rng, reps))
        h.sort()
        tail = 1.0 - np.searchsorted(h, z, side="right") / reps
    else:
        raise PreconditionError(f"unknown method {method!r}")
    return z**x_law.gamma * tail
