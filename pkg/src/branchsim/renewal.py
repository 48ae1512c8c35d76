"""The Markov renewal process behind the branching system.

A single particle line alternates: it lives ``xi ~ Gamma_i`` in type ``i``,
then jumps to type ``k`` with probability ``m_ik``. The occupation time
``tbar_j(t)`` is the total time spent in type ``j`` up to ``t``, including
the residual of the sojourn in progress.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal

from .errors import EmptySample, NoConvergence, PreconditionError
from .lifetimes import ParetoTail
from .stats import Moments, SlopeFit, TailEstimate, loglog_slope, proportion, wilson_ci


def _cum_rows(M):
    cum = np.cumsum(np.asarray(M, dtype=float), axis=1)
    cum[:, -1] = 1.0
    return cum


def _next_state(cum, current, u):
    return (u[:, None] >= cum[current]).sum(axis=1)


class ChainPath(NamedTuple):
    states: np.ndarray
    counts: np.ndarray


def simulate_chain(M, i0: int, n: int, rng: np.random.Generator) -> ChainPath:
    """First ``n`` states ``X_1 = i0, X_2, ...`` of the chain and their visit counts."""
    M = np.asarray(M, dtype=float)
    K = M.shape[0]
    if n < 0:
        raise PreconditionError("n must be >= 0")
    states = np.empty(n, dtype=np.int64)
    if n:
        cum = _cum_rows(M).tolist()
        u = rng.random(n)
        s = int(i0)
        for k in range(n):
            states[k] = s
            row = cum[s]
            s = next(j for j, c in enumerate(row) if u[k] < c)
    return ChainPath(states, np.bincount(states, minlength=K))


def simulate_chains(M, i0, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    """Visit counts of ``reps`` independent chains over ``n`` steps, shape ``(reps, K)``."""
    M = np.asarray(M, dtype=float)
    K = M.shape[0]
    cum = _cum_rows(M)
    cur = np.broadcast_to(np.asarray(i0, dtype=np.int64), (reps,)).copy()
    counts = np.zeros((reps, K), dtype=np.int64)
    rows = np.arange(reps)
    for _ in range(n):
        counts[rows, cur] += 1
        cur = _next_state(cum, cur, rng.random(reps))
    return counts


@dataclass(frozen=True)
class RenewalPath:
    """One realization up to ``horizon``.

    ``states`` and ``lifetimes`` list the ``n_t + 1`` sojourns that started
    by the horizon; the last one is still running at ``horizon``.
    """

    states: np.ndarray
    lifetimes: np.ndarray
    cumulative: np.ndarray
    horizon: float
    n_t: int
    counts: np.ndarray  # completed sojourns per type
    occupation: np.ndarray  # tbar_j(horizon)
    residual: np.ndarray  # eta_j(horizon)


def simulate_renewal(model, i0: int, t: float, rng: np.random.Generator) -> RenewalPath:
    """Markov renewal path from type ``i0`` with all clocks at age 0."""
    if not t > 0:
        raise PreconditionError("horizon must be positive")
    K = model.K
    cum = _cum_rows(model.mean_matrix).tolist()
    states, xis = [], []
    total = 0.0
    s = int(i0)
    block = 64
    while True:
        # chain states for a block, then lifetimes type by type
        u = rng.random(block)
        blk = np.empty(block, dtype=np.int64)
        for k in range(block):
            blk[k] = s
            s = next(j for j, c in enumerate(cum[s]) if u[k] < c)
        xi = np.empty(block)
        for k in range(K):
            sel = blk == k
            if sel.any():
                xi[sel] = model.lifetimes[k].sample(rng, int(sel.sum()))
        states.append(blk)
        xis.append(xi)
        total += xi.sum()
        if total > t:
            break
        block *= 2
    states = np.concatenate(states)
    xis = np.concatenate(xis)
    Z = np.cumsum(xis)
    n_t = int(np.searchsorted(Z, t, side="right"))  # Z[n_t - 1] <= t < Z[n_t]
    states, xis, Z = states[: n_t + 1], xis[: n_t + 1], Z[: n_t + 1]
    done = np.bincount(states[:n_t], weights=xis[:n_t], minlength=K)
    z_nt = Z[n_t - 1] if n_t else 0.0
    residual = np.zeros(K)
    residual[states[n_t]] = t - z_nt
    counts = np.bincount(states[:n_t], minlength=K)
    return RenewalPath(states, xis, Z, float(t), n_t, counts, done + residual, residual)


class OccupationBatch(NamedTuple):
    t: np.ndarray  # (T,)
    occupation: np.ndarray  # (reps, T, K)
    n_t: np.ndarray  # (reps, T)
    visits: np.ndarray  # (reps, T, K) completed sojourns per type


def simulate_occupations(model, i0, t_grid, reps: int, rng: np.random.Generator) -> OccupationBatch:
    """Occupation times of ``reps`` independent renewal paths at every horizon in ``t_grid``.

    All paths advance together one sojourn per step, so the work is a few
    array operations per renewal of the longest path.
    """
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise PreconditionError("t_grid must be positive and strictly increasing")
    if reps < 1:
        raise EmptySample("reps must be >= 1")
    K, T = model.K, t.size
    cum = _cum_rows(model.mean_matrix)
    cur = np.broadcast_to(np.asarray(i0, dtype=np.int64), (reps,)).copy()
    start = np.zeros(reps)
    occ = np.zeros((reps, K))
    visits = np.zeros((reps, K), dtype=np.int64)
    out_occ = np.zeros((reps, T, K))
    out_n = np.zeros((reps, T), dtype=np.int64)
    out_vis = np.zeros((reps, T, K), dtype=np.int64)
    active = np.arange(reps)
    while active.size:
        ty = cur[active]
        xi = np.empty(active.size)
        for k in range(K):
            sel = ty == k
            if sel.any():
                xi[sel] = model.lifetimes[k].sample(rng, int(sel.sum()))
        st = start[active]
        end = st + xi
        for m in range(T):
            hit = (st <= t[m]) & (end > t[m])
            if hit.any():
                idx = active[hit]
                out_occ[idx, m] = occ[idx]
                out_occ[idx, m, ty[hit]] += t[m] - st[hit]
                out_vis[idx, m] = visits[idx]
                out_n[idx, m] = visits[idx].sum(axis=1)
        occ[active, ty] += xi
        visits[active, ty] += 1
        start[active] = end
        cur[active] = _next_state(cum, ty, rng.random(active.size))
        active = active[end <= t[-1]]
    return OccupationBatch(t, out_occ, out_n, out_vis)


# -- tail estimates ----------------------------------------------------------


def _heavy_gamma(model) -> float:
    return model.gamma if model.heavy_type is not None else 1.0


def occupation_tail_type1(model, t: float, c1: float, reps: int, rng, i0: int = 0) -> TailEstimate:
    """``P_i0{tbar_1(t) / t <= c1}`` where type 1 is the long-living type (index 0)."""
    if not 0 < c1 <= 1:
        raise PreconditionError("c1 must lie in (0, 1]")
    batch = simulate_occupations(model, i0, [t], reps, rng)
    return proportion(batch.occupation[:, 0, 0] <= c1 * t)


class TailScan(NamedTuple):
    t: np.ndarray
    estimates: list
    fit: SlopeFit | None
    bound_exponents: dict


def occupation_tail_scan(model, t_grid, c1: float, reps: int, rng, i0: int = 0) -> TailScan:
    """:func:`occupation_tail_type1` across horizons with a log-log decay fit.

    Both candidate decay orders are attached: ``1 - eta`` and the sharper
    ``gamma - eta`` (plus an arbitrary small epsilon).
    """
    batch = simulate_occupations(model, i0, t_grid, reps, rng)
    t = batch.t
    ests = [proportion(batch.occupation[:, m, 0] <= c1 * t[m]) for m in range(t.size)]
    p = np.array([e.p_hat for e in ests])
    fit = loglog_slope(t, p) if t.size >= 3 and np.all(p > 0) else None
    eta = model.eta if model.eta is not None else math.inf
    return TailScan(t, ests, fit, {"1-eta": 1.0 - eta, "gamma-eta": _heavy_gamma(model) - eta})


class CountTails(NamedTuple):
    lower: TailEstimate
    lower_bound: float
    upper: TailEstimate
    upper_threshold: float


def renewal_count_tails(model, t: float, c_t: float, a: float, reps: int, rng, i0: int = 0) -> CountTails:
    """Lower and upper tails of the renewal count ``n_t``.

    Lower: ``P{n_t / t^gamma <= c_t}`` with bound ``2 c_t``. Upper:
    ``P{n_t / t^gamma > t^a}`` for ``gamma < 1``, and ``P{n_t / t > a}`` for
    ``gamma = 1``; both decay faster than any power.
    """
    if c_t <= 0 or a <= 0:
        raise PreconditionError("thresholds must be positive")
    g = _heavy_gamma(model)
    n = simulate_occupations(model, i0, [t], reps, rng).n_t[:, 0]
    lower = proportion(n <= c_t * t**g)
    upper_thr = t ** (g + a) if g < 1 else a * t
    return CountTails(lower, 2.0 * c_t, proportion(n > upper_thr), float(upper_thr))


class CountGrowth(NamedTuple):
    t: np.ndarray
    moments: list
    fit: SlopeFit


def renewal_count_growth(model, t_grid, reps: int, rng, i0: int = 0) -> CountGrowth:
    """Mean renewal count at each horizon and its log-log growth exponent."""
    batch = simulate_occupations(model, i0, t_grid, reps, rng)
    mom = [Moments.of(batch.n_t[:, m]) for m in range(batch.t.size)]
    fit = loglog_slope(batch.t, [m.mean for m in mom])
    return CountGrowth(batch.t, mom, fit)


class Type2Tails(NamedTuple):
    j: int
    lower: TailEstimate
    lower_bound_shape: float
    upper: TailEstimate
    upper_threshold: float
    upper_bound: float


def occupation_type2_tails(
    model, t: float, reps: int, rng, c_t: float = 0.1, a: float = 0.2, eps: float = 0.05, i0: int = 0
) -> list[Type2Tails]:
    """Tails of the occupation of every short-lived type ``j >= 2``.

    Lower: ``P{tbar_j(t) <= t^gamma c_t}`` against ``c_t + t^(eps - gamma)``.
    Upper: ``P{tbar_j(t) >= t^(gamma + a)}`` against ``t^(1 - eta gamma)``
    when ``gamma < 1``; for ``gamma = 1`` the event is ``tbar_j(t) >= a t``
    and the bound ``t^(1 - eta)``. Bounds hold up to unknown constants.
    """
    if model.K < 2:
        raise PreconditionError("needs at least two types")
    g = _heavy_gamma(model)
    batch = simulate_occupations(model, i0, [t], reps, rng)
    out = []
    for j in range(1, model.K):
        occ = batch.occupation[:, 0, j]
        eta_j = model.lifetimes[j].tail_exponent
        if g < 1:
            thr, bound = t ** (g + a), t ** (1.0 - eta_j * g)
        else:
            thr, bound = a * t, t ** (1.0 - eta_j)
        out.append(
            Type2Tails(
                j,
                proportion(occ <= t**g * c_t),
                c_t + t ** (eps - g),
                proportion(occ >= thr),
                float(thr),
                float(bound),
            )
        )
    return out


class StableSumTails(NamedTuple):
    upper: TailEstimate | None
    upper_bound: float | None
    lower: TailEstimate | None
    lower_bound: float | None


def stable_sum_constant(gamma: float) -> float:
    """``(10 - 8 gamma)(2 - 2 gamma)^(1/(1 - gamma))`` for ``gamma < 1``."""
    return (10.0 - 8.0 * gamma) * (2.0 - 2.0 * gamma) ** (1.0 / (1.0 - gamma))


def stable_sum_tails(
    law: ParetoTail, n: int, reps: int, rng, d_n: float | None = None, c_n: float | None = None, chunk: int = 2_000_000
) -> StableSumTails:
    """Tails of ``S_n = xi_1 + ... + xi_n`` on the scale ``n^(1/gamma)``.

    Upper: ``P{S_n > n^(1/gamma) d_n}`` against ``d_n^-gamma``. Lower:
    ``P{S_n <= c_n n^(1/gamma)}`` against ``2 exp(-c_n^(-gamma/(1-gamma)) / c_gamma)``
    (no closed bound for ``gamma = 1``).
    """
    if not isinstance(law, ParetoTail):
        raise PreconditionError("stable sums need a ParetoTail law")
    if n < 1 or reps < 1:
        raise PreconditionError("n and reps must be positive")
    g = law.gamma
    scale = float(n) ** (1.0 / g)
    sums = np.empty(reps)
    per = max(1, chunk // n)
    for lo in range(0, reps, per):
        hi = min(reps, lo + per)
        sums[lo:hi] = law.sample(rng, (hi - lo, n)).sum(axis=1)
    upper = lower = ub = lb = None
    if d_n is not None:
        upper, ub = proportion(sums > scale * d_n), float(d_n**-g)
    if c_n is not None:
        lower = proportion(sums <= scale * c_n)
        lb = 2.0 * math.exp(-(c_n ** (-g / (1.0 - g))) / stable_sum_constant(g)) if g < 1 else None
    return StableSumTails(upper, ub, lower, lb)


def exponential_rate_fit(n, p) -> SlopeFit | None:
    """Fit ``p ~ C exp(-c n)``; returns a fit of ``log p`` against ``n`` (slope ``-c``).

    Points with ``p = 0`` are dropped; ``None`` when fewer than 3 remain.
    """
    n = np.asarray(n, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = p > 0
    if keep.sum() < 3:
        return None
    # loglog_slope on (e^n, p) is the semilog fit
    return loglog_slope(np.exp(n[keep] - n[keep].min()), p[keep])


# -- deterministic solver for the linear occupation system -------------------


@dataclass(frozen=True)
class OccupationSolverGrid:
    """``alpha_{i,j}(t, a) = P_i{tbar_j(t) <= a}`` on a uniform grid.

    Stored in gap coordinates: ``r[i, j, n, l] = 1 - alpha_{i,j}(t, a)`` at
    ``a = l delta`` and ``t - a = n delta``; ``n = 0`` holds the right limit
    ``t -> a+``.
    """

    delta: float
    t_max: float
    r: np.ndarray
    iterations: int
    residual: float

    @property
    def K(self) -> int:
        return self.r.shape[0]

    def alpha(self, i: int, j: int, t: float, a: float) -> float:
        """Bilinear interpolation of ``alpha_{i,j}(t, a)``; 1 whenever ``a >= t``."""
        if a >= t:
            return 1.0
        if t > self.t_max + 1e-12 or a < 0:
            raise PreconditionError("(t, a) outside the solved grid")
        x, y = (t - a) / self.delta, a / self.delta
        N = self.r.shape[2] - 1
        n0, l0 = min(int(x), N - 1), min(int(y), N - 1)
        fx, fy = x - n0, y - l0
        R = self.r[i, j]
        val = (
            R[n0, l0] * (1 - fx) * (1 - fy)
            + R[n0 + 1, l0] * fx * (1 - fy)
            + R[n0, l0 + 1] * (1 - fx) * fy
            + R[n0 + 1, l0 + 1] * fx * fy
        )
        return float(min(1.0, max(0.0, 1.0 - val)))

    def table(self, t_values, a_values) -> np.ndarray:
        """``alpha[i, j, p, q]`` at ``t_values[p]``, ``a_values[q]``."""
        K = self.K
        out = np.empty((K, K, len(t_values), len(a_values)))
        for i in range(K):
            for j in range(K):
                for p, tt in enumerate(t_values):
                    for q, aa in enumerate(a_values):
                        out[i, j, p, q] = self.alpha(i, j, tt, aa)
        return out

    def write_csv(self, path, stride: int = 1) -> None:
        """Rows ``t, a, i, j, alpha`` for grid points with ``a <= t <= t_max``."""
        N = self.r.shape[2] - 1
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "a", "i", "j", "alpha"])
            for n in range(0, N + 1, stride):
                for l in range(0, N + 1 - n, stride):
                    t, a = (n + l) * self.delta, l * self.delta
                    for i in range(self.K):
                        for j in range(self.K):
                            val = 1.0 if n == 0 else 1.0 - self.r[i, j, n, l]
                            w.writerow([f"{t:.17g}", f"{a:.17g}", i, j, f"{val:.17g}"])


def _stieltjes_conv(dG, F, axis):
    """``sum_{q>=1} dG[q] (F[m-q+1] + F[m-q]) / 2`` along ``axis`` for every ``m``."""
    F = np.moveaxis(F, axis, 0)
    avg = 0.5 * (F[1:] + F[:-1])
    out = np.zeros_like(F)
    shape = (-1,) + (1,) * (F.ndim - 1)
    conv = signal.fftconvolve(dG[1:].reshape(shape), avg, axes=0)
    out[1:] = conv[: F.shape[0] - 1]
    return np.moveaxis(out, 0, axis)


def solve_linear_system(
    model, t_max: float, delta: float, tol: float = 1e-8, max_iter: int = 20_000
) -> OccupationSolverGrid:
    r"""Fixed point of the linear occupation system on a ``delta`` grid.

    With ``r = 1 - alpha``, ``n = t - a`` (gap) and ``l = a``::

        r_ij(n, l) = int_0^n Gamma_i(ds) sum_k m_ik r_kj(n - s, l),            j != i
        r_ii(n, l) = 1 - Gamma_i(l) + int_0^l Gamma_i(ds) sum_k m_ik r_ki(n, l - s)

    The Stieltjes integrals use the lifetime increments on each cell with the
    integrand averaged over the cell ends (second-order accurate). The
    right-end term makes each sweep implicit, so all cells are updated
    together by Picard iteration until the sup-norm change drops below
    ``tol``; the map is a contraction with factor ``max_i Gamma_i(t_max)``.
    """
    if not delta > 0 or not t_max > 0:
        raise PreconditionError("t_max and delta must be positive")
    N = int(round(t_max / delta))
    if N > 100_000:
        raise PreconditionError("more than 1e5 grid cells per axis")
    if abs(N * delta - t_max) > 1e-9 * t_max:
        raise PreconditionError("t_max must be a multiple of delta")
    K = model.K
    M = model.mean_matrix
    x = np.arange(N + 1) * delta
    G = np.stack([law.cdf(x) for law in model.lifetimes])
    dG = np.diff(G, axis=1, prepend=0.0)
    r = np.zeros((K, K, N + 1, N + 1))
    off = ~np.eye(K, dtype=bool)
    change = math.inf
    for it in range(1, max_iter + 1):
        new = np.empty_like(r)
        for i in range(K):
            mix = np.tensordot(M[i], r, axes=(0, 0))  # sum_k m_ik r_kj, shape (K, N+1, N+1)
            for j in range(K):
                if j == i:
                    new[i, i] = (1.0 - G[i])[None, :] + _stieltjes_conv(dG[i], mix[i], axis=1)
                else:
                    new[i, j] = _stieltjes_conv(dG[i], mix[j], axis=0)
        np.clip(new, 0.0, 1.0, out=new)
        new[off, 0, :] = 0.0
        change = float(np.max(np.abs(new - r)))
        r = new
        if change < tol:
            return OccupationSolverGrid(float(delta), float(t_max), r, it, change)
    raise NoConvergence(f"sup-norm change {change:.3g} after {max_iter} iterations")


def empirical_occupation_cdf(model, i0: int, t_values, a_values, reps: int, rng) -> np.ndarray:
    """Monte Carlo ``P_i0{tbar_j(t) <= a}`` as TailEstimates ``[j][p][q]``."""
    batch = simulate_occupations(model, i0, t_values, reps, rng)
    out = []
    for j in range(model.K):
        rows = []
        for p in range(len(t_values)):
            occ = batch.occupation[:, p, j]
            rows.append([proportion(occ <= a) for a in a_values])
        out.append(rows)
    return out
