"""Increments of symmetric alpha-stable motion.

Isotropic increments are Gaussian vectors with a random variance: for
``alpha < 2``, ``X = sqrt(2 S) Z`` where ``S`` is positive (alpha/2)-stable
with ``E exp(-lam S) = exp(-lam^(alpha/2))``. Then
``E exp(i <theta, X>) = exp(-|theta|^alpha)``, and for ``alpha = 2`` each
coordinate has variance 2 per unit time.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidAlpha, OutOfDomain


def positive_stable(a: float, rng: np.random.Generator, size) -> np.ndarray:
    """Positive ``a``-stable variables, ``0 < a < 1``, with Laplace transform ``exp(-lam^a)``.

    Uses Kanter's representation with ``U ~ U(0, pi)`` and ``W ~ Exp(1)``.
    """
    if not 0 < a < 1:
        raise InvalidAlpha(f"positive stable index must be in (0, 1), got {a}")
    u = rng.uniform(0.0, np.pi, size)
    w = rng.standard_exponential(size)
    part = np.sin(a * u) / np.sin(u) ** (1.0 / a)
    return part * (np.sin((1.0 - a) * u) / w) ** ((1.0 - a) / a)


def sample_stable_increment(alpha: float, dt, d: int, rng: np.random.Generator, size=None, isotropic: bool = True):
    """Increment of a ``d``-dimensional symmetric ``alpha``-stable motion over ``dt``.

    Parameters
    ----------
    alpha : float
        Stability index in ``(0, 2]``.
    dt : float or ndarray
        Elapsed time(s); an array gives one increment per entry.
    d : int
        Spatial dimension.
    size : int, optional
        Number of increments when ``dt`` is a scalar.
    isotropic : bool
        If False each coordinate is an independent one-dimensional motion.

    Returns
    -------
    ndarray
        Shape ``(d,)``, or ``(n, d)`` for ``n`` increments.
    """
    if not 0 < alpha <= 2:
        raise InvalidAlpha(f"alpha must be in (0, 2], got {alpha}")
    dt_arr = np.asarray(dt, dtype=float)
    if np.any(dt_arr < 0):
        raise OutOfDomain("time increments must be nonnegative")
    if dt_arr.ndim == 0:
        n = 1 if size is None else int(size)
        dt_arr = np.full(n, float(dt_arr))
    n = dt_arr.size
    scale = dt_arr ** (1.0 / alpha)
    z = rng.standard_normal((n, d))
    if alpha == 2.0:
        var = np.full((n, 1), 2.0)
    elif isotropic:
        var = 2.0 * positive_stable(alpha / 2.0, rng, (n, 1))
    else:
        var = 2.0 * positive_stable(alpha / 2.0, rng, (n, d))
    out = np.sqrt(var) * z * scale[:, None]
    if np.asarray(dt).ndim == 0 and size is None:
        return out[0]
    return out
