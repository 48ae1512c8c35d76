"""Spatial multitype branching with stable motion.

Trees are simulated generation by generation for a whole forest at once:
every particle of the current generation draws its lifetime, moves, and (if
it dies before the horizon) is replaced by its children at its death
position. Positions are only evaluated at birth, at observation times and at
``min(death, horizon)``; stable motion has independent increments, so this
yields the exact joint law at those times.

Per-tree summaries recorded for every observation time ``t``:

* number of alive particles of each type,
* ``mu_j(t)``: least time spent in type ``j`` along the line of an alive
  particle (``inf`` if the tree is extinct),
* ``sigma_j(t)``: largest time spent in type ``j`` along any line of the
  tree up to ``t`` (alive or not),
* positions, types and line occupations of the alive particles.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from .errors import PopulationExplosion, PreconditionError, WindowTooSmall
from .motion import sample_stable_increment
from .stats import Moments, TailEstimate, proportion, wilson_ci

POPULATION_CAP = 10_000_000


class AliveSet(NamedTuple):
    tree: np.ndarray
    type: np.ndarray
    pos: np.ndarray  # (n, d)
    occ: np.ndarray  # (n, K) line occupation at the observation time
    pid: np.ndarray | None  # particle ids when the genealogy is recorded


@dataclass(frozen=True)
class Genealogy:
    """Flat particle table of one or more trees.

    ``end_pos`` is the position at ``min(death, horizon)``; ``occ_birth`` the
    time spent in each type by the ancestors of a particle before its birth.
    Parents always precede their children.
    """

    ids: np.ndarray
    parent: np.ndarray  # -1 for ancestors
    tree: np.ndarray
    type: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    theta: np.ndarray
    birth_pos: np.ndarray
    end_pos: np.ndarray
    occ_birth: np.ndarray
    horizon: float

    def __len__(self) -> int:
        return self.ids.size

    @property
    def K(self) -> int:
        return self.occ_birth.shape[1]

    def alive_mask(self, t: float | None = None) -> np.ndarray:
        t = self.horizon if t is None else t
        return (self.birth <= t) & (self.death > t)

    def line_occupation(self, t: float | None = None) -> np.ndarray:
        """Occupation of each line up to ``min(death, t)`` (rows of unborn particles are 0)."""
        t = self.horizon if t is None else t
        occ = self.occ_birth.copy()
        span = np.clip(np.minimum(self.death, t) - self.birth, 0.0, None)
        occ[np.arange(len(self)), self.type] += span
        occ[self.birth > t] = 0.0
        return occ

    def subset(self, mask) -> "Genealogy":
        m = np.asarray(mask, dtype=bool)
        return Genealogy(
            self.ids[m], self.parent[m], self.tree[m], self.type[m], self.birth[m], self.death[m],
            self.theta[m], self.birth_pos[m], self.end_pos[m], self.occ_birth[m], self.horizon,
        )

    def write_csv(self, path) -> None:
        d = self.birth_pos.shape[1]
        head = ["id", "parent", "tree", "type", "birth_t", "death_t"]
        head += [f"birth_x{k}" for k in range(d)] + [f"death_x{k}" for k in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for r in range(len(self)):
                row = [int(self.ids[r]), int(self.parent[r]), int(self.tree[r]), int(self.type[r])]
                row += [f"{self.birth[r]:.17g}", f"{self.death[r]:.17g}"]
                row += [f"{v:.17g}" for v in self.birth_pos[r]] + [f"{v:.17g}" for v in self.end_pos[r]]
                w.writerow(row)


class ForestResult(NamedTuple):
    t_obs: np.ndarray
    n_trees: int
    alive_count: np.ndarray  # (n_trees, T, K)
    mu: np.ndarray  # (n_trees, T, K)
    sigma: np.ndarray  # (n_trees, T, K)
    alive: list  # AliveSet per observation time
    n_particles: int
    genealogy: Genealogy | None

    def alive_total(self) -> np.ndarray:
        return self.alive_count.sum(axis=2)


def _increments(model, types, dt, rng):
    out = np.zeros((types.size, model.d))
    for k in range(model.K):
        sel = np.flatnonzero(types == k)
        if sel.size:
            out[sel] = sample_stable_increment(model.alphas[k], dt[sel], model.d, rng)
    return out


def simulate_forest(
    model,
    x0,
    types0,
    t_obs,
    rng: np.random.Generator,
    theta0=None,
    tree=None,
    n_trees: int | None = None,
    record: bool = False,
    cap: int = POPULATION_CAP,
) -> ForestResult:
    """Simulate independent trees from the given ancestors up to ``max(t_obs)``.

    Parameters
    ----------
    x0 : array_like, shape (n, d)
        Ancestor positions.
    types0 : array_like of int, shape (n,)
    t_obs : array_like
        Increasing positive observation times; the last is the horizon.
    theta0 : array_like, optional
        Ancestor ages; an aged ancestor lives the residual of its lifetime.
    tree : array_like of int, optional
        Group index of each ancestor (several ancestors may share a group,
        e.g. one Poisson configuration). Defaults to one group per ancestor.
    record : bool
        Keep the full particle table.
    cap : int
        Largest generation or alive population tolerated.
    """
    t = np.asarray(t_obs, dtype=float).ravel()
    if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise PreconditionError("observation times must be positive and increasing")
    H = float(t[-1])
    T, K, d = t.size, model.K, model.d
    types = np.asarray(types0, dtype=np.int64).ravel()
    n0 = types.size
    pos = np.asarray(x0, dtype=float).reshape(n0, d)
    theta = np.zeros(n0) if theta0 is None else np.broadcast_to(np.asarray(theta0, dtype=float), (n0,)).copy()
    if np.any(theta < 0):
        raise PreconditionError("ancestor ages must be nonnegative")
    tr = np.arange(n0) if tree is None else np.asarray(tree, dtype=np.int64).ravel()
    G = int(tr.max()) + 1 if n_trees is None and n0 else int(n_trees or 0)
    birth = np.zeros(n0)
    occ_b = np.zeros((n0, K))
    parent = np.full(n0, -1, dtype=np.int64)
    ids = np.arange(n0, dtype=np.int64)
    next_id = n0

    alive_count = np.zeros((G, T, K), dtype=np.int64)
    mu = np.full((G, T, K), np.inf)
    sigma = np.zeros((G, T, K))
    alive_parts: list[list] = [[] for _ in range(T)]
    rows: list = []
    n_particles = 0

    while types.size:
        n = types.size
        if n > cap:
            raise PopulationExplosion(f"generation of {n} particles exceeds the cap {cap}")
        n_particles += n
        life = np.empty(n)
        for k in range(K):
            sel = types == k
            if not sel.any():
                continue
            law = model.lifetimes[k]
            aged = sel & (theta > 0)
            fresh = sel & ~aged
            if fresh.any():
                life[fresh] = law.sample(rng, int(fresh.sum()))
            if aged.any():
                life[aged] = law.sample_residual(rng, theta[aged])
        death = birth + life
        last_t = birth.copy()
        last_pos = pos.copy()
        for m in range(T):
            tm = t[m]
            born = birth <= tm
            if not born.any():
                continue
            bidx = np.flatnonzero(born)
            val = occ_b[bidx].copy()
            val[np.arange(bidx.size), types[bidx]] += np.minimum(death[bidx], tm) - birth[bidx]
            np.maximum.at(sigma[:, m, :], tr[bidx], val)
            live = bidx[death[bidx] > tm]
            if live.size:
                p = last_pos[live] + _increments(model, types[live], tm - last_t[live], rng)
                last_pos[live] = p
                last_t[live] = tm
                occ_now = occ_b[live].copy()
                occ_now[np.arange(live.size), types[live]] += tm - birth[live]
                np.minimum.at(mu[:, m, :], tr[live], occ_now)
                np.add.at(alive_count[:, m, :], (tr[live], types[live]), 1)
                alive_parts[m].append((tr[live], types[live], p, occ_now, ids[live] if record else None))
        end = np.minimum(death, H)
        end_pos = last_pos + _increments(model, types, end - last_t, rng)
        if record:
            rows.append((ids, parent, tr, types, birth, death, theta, pos, end_pos, occ_b))

        # reproduction at the death position
        rep = np.flatnonzero(death <= H)
        if rep.size == 0:
            break
        counts = np.zeros((rep.size, K), dtype=np.int64)
        for k in range(K):
            sel = np.flatnonzero(types[rep] == k)
            if sel.size:
                counts[sel] = model.offspring[k].sample(rng, sel.size)
        per = counts.sum(axis=1)
        par = np.repeat(rep, per)
        child_types = np.repeat(np.tile(np.arange(K), rep.size), counts.ravel())
        c_occ = occ_b[par].copy()
        c_occ[np.arange(par.size), types[par]] += life[par]
        n_new = par.size
        new_ids = np.arange(next_id, next_id + n_new, dtype=np.int64)
        next_id += n_new
        parent = ids[par]
        ids = new_ids
        tr = tr[par]
        birth = death[par]
        pos = end_pos[par]
        occ_b = c_occ
        theta = np.zeros(n_new)
        types = child_types

    alive = []
    for m in range(T):
        parts = alive_parts[m]
        if parts:
            alive.append(
                AliveSet(
                    np.concatenate([p[0] for p in parts]),
                    np.concatenate([p[1] for p in parts]),
                    np.concatenate([p[2] for p in parts]),
                    np.concatenate([p[3] for p in parts]),
                    np.concatenate([p[4] for p in parts]) if record else None,
                )
            )
        else:
            alive.append(
                AliveSet(
                    np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros((0, d)), np.zeros((0, K)),
                    np.zeros(0, np.int64) if record else None,
                )
            )
        if alive[-1].tree.size > cap:
            raise PopulationExplosion(f"{alive[-1].tree.size} alive particles exceed the cap {cap}")
    gen = None
    if record:
        cols = list(zip(*rows)) if rows else [[] for _ in range(10)]
        cat = [np.concatenate(c) if len(c) else np.zeros(0) for c in cols]
        gen = Genealogy(
            cat[0].astype(np.int64), cat[1].astype(np.int64), cat[2].astype(np.int64), cat[3].astype(np.int64),
            cat[4], cat[5], cat[6], cat[7].reshape(-1, d), cat[8].reshape(-1, d), cat[9].reshape(-1, K), H,
        )
    return ForestResult(t, G, alive_count, mu, sigma, alive, n_particles, gen)


def simulate_tree(model, ancestor, t: float, rng: np.random.Generator, cap: int = POPULATION_CAP) -> Genealogy:
    """Full genealogy of one tree started by ``ancestor = (x, i, theta)``."""
    x, i, theta = ancestor
    if not t > 0:
        raise PreconditionError("horizon must be positive")
    x = np.asarray(x, dtype=float).reshape(1, model.d)
    res = simulate_forest(model, x, [int(i)], [t], rng, theta0=[float(theta)], record=True, cap=cap)
    return res.genealogy


def reduced_tree(g: Genealogy, t: float | None = None) -> Genealogy:
    """Particles lying on the ancestry line of some particle alive at ``t``."""
    t = g.horizon if t is None else t
    if t > g.horizon:
        raise PreconditionError("t beyond the simulated horizon")
    keep = g.alive_mask(t)
    index = {int(pid): r for r, pid in enumerate(g.ids)}
    pos = np.array([index.get(int(p), -1) for p in g.parent], dtype=np.int64)
    frontier = np.flatnonzero(keep)
    while frontier.size:
        up = pos[frontier]
        up = up[up >= 0]
        up = up[~keep[up]]
        keep[up] = True
        frontier = np.unique(up)
    return g.subset(keep)


def occupation_extremes(g: Genealogy, t: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(mu_j(t), sigma_j(t))`` of a single-tree genealogy."""
    t = g.horizon if t is None else t
    occ = g.line_occupation(t)
    born = g.birth <= t
    alive = g.alive_mask(t)
    mu = occ[alive].min(axis=0) if alive.any() else np.full(g.K, np.inf)
    sigma = occ[born].max(axis=0) if born.any() else np.zeros(g.K)
    return mu, sigma


# -- Monte Carlo functionals -------------------------------------------------


def _single_type_forest(model, i0, reps, t_obs, rng, x=None, theta=0.0, **kw) -> ForestResult:
    x = np.zeros((reps, model.d)) if x is None else np.broadcast_to(np.asarray(x, dtype=float), (reps, model.d))
    return simulate_forest(model, x, np.full(reps, i0), t_obs, rng, theta0=np.full(reps, float(theta)), **kw)


def mc_occupation_grid(model, i0: int, t_values, a_values, reps: int, rng) -> list:
    """``P_i0{mu_j(t) <= a}`` as TailEstimates indexed ``[j][p][q]`` for ``t_values[p]``, ``a_values[q]``."""
    res = _single_type_forest(model, i0, reps, t_values, rng)
    return [
        [[proportion(res.mu[:, p, j] <= a) for a in a_values] for p in range(len(t_values))]
        for j in range(model.K)
    ]


def mc_occupation_law(model, i0: int, t: float, a: float, reps: int, rng) -> list[TailEstimate]:
    """``P_i0{mu_j(t) <= a}`` for every type ``j``."""
    grid = mc_occupation_grid(model, i0, [t], [a], reps, rng)
    return [grid[j][0][0] for j in range(model.K)]


def occupation_max_tails(model, i0: int, t_values, a_values, reps: int, rng) -> list:
    """``P_i0{sigma_j(t) >= a}`` indexed ``[j][p][q]``."""
    res = _single_type_forest(model, i0, reps, t_values, rng)
    return [
        [[proportion(res.sigma[:, p, j] >= a) for a in a_values] for p in range(len(t_values))]
        for j in range(model.K)
    ]


def mean_population(model, i0: int, t_values, reps: int, rng) -> list[Moments]:
    """Summaries of the total alive count per tree at each time."""
    res = _single_type_forest(model, i0, reps, t_values, rng)
    tot = res.alive_total()
    return [Moments.of(tot[:, m]) for m in range(len(res.t_obs))]


def population_gf_complement(model, i0: int, t: float, s, reps: int, rng) -> Moments:
    """Samples of ``1 - prod_j s_j^(N_t^j)``; their mean is ``1 - F^(i0)(t; s)``."""
    s = np.asarray(s, dtype=float)
    res = _single_type_forest(model, i0, reps, [t], rng)
    counts = res.alive_count[:, 0, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(counts == 0, 0.0, counts * np.log(s))
    return Moments.of(-np.expm1(logs.sum(axis=1)))


def _in_ball(alive: AliveSet, center, radius, n_trees) -> np.ndarray:
    hit = np.zeros(n_trees, dtype=bool)
    if alive.tree.size:
        inside = np.linalg.norm(alive.pos - np.asarray(center, dtype=float), axis=1) <= radius
        hit[alive.tree[inside]] = True
    return hit


def local_survival(model, start, t: float, center, radius: float, reps: int, rng) -> TailEstimate:
    """``P^theta_{x,i}{N_t(B x K) > 0}`` for the ball ``B(center, radius)``."""
    x, i, theta = start
    if not t > 0 or not radius > 0:
        raise PreconditionError("t and radius must be positive")
    res = _single_type_forest(model, int(i), reps, [t], rng, x=x, theta=theta)
    return proportion(_in_ball(res.alive[0], center, radius, reps))


def local_survival_bound_shape(model, t) -> float:
    """``t^(-d/alpha) + t^(1 - eta)`` (up to a constant)."""
    eta = model.eta if model.eta is not None else math.inf
    return float(t ** (-model.d / model.alpha_min) + t ** (1.0 - eta))


def ball_volume(d: int, r: float) -> float:
    return float(math.pi ** (d / 2) / special.gamma(d / 2 + 1) * r**d)


def uniform_ball(rng, n: int, d: int, R: float) -> np.ndarray:
    z = rng.standard_normal((n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return z * (R * rng.random((n, 1)) ** (1.0 / d))


def window_radius(model, t: float, L: float, eps: float = 0.05, exponent: float | None = None) -> float:
    """Radius of the window ``|x| <= L t^e``.

    ``e = 1/alpha`` unless the model has a long-living type that is not the
    most mobile one; then ``e = v + eps`` with the effective mobility ``v``.
    """
    from .model import critical_dimensions

    if exponent is None:
        dims = critical_dimensions(model)
        exponent = dims.v_mob + eps if dims.regime in ("CaseB1", "CaseB2") else 1.0 / model.alpha_min
    return float(L * max(t, 1.0) ** exponent)


def _union_length_1d(tree, left, right, n_trees) -> np.ndarray:
    """Per-tree total length of a union of intervals."""
    out = np.zeros(n_trees)
    if tree.size == 0:
        return out
    order = np.lexsort((left, tree))
    tr, lo, hi = tree[order], left[order], right[order]
    span = float(max(np.abs(lo).max(), np.abs(hi).max())) * 4.0 + 1.0
    off = tr * span
    run = np.maximum.accumulate(hi + off) - off
    prev = np.empty_like(run)
    prev[0] = -np.inf
    prev[1:] = run[:-1]
    first = np.ones(tr.size, dtype=bool)
    first[1:] = tr[1:] != tr[:-1]
    prev[first] = -np.inf
    contrib = np.clip(hi - np.maximum(lo, prev), 0.0, None)
    np.add.at(out, tr, contrib)
    return out


def covered_volume(alive: AliveSet, radius, R, n_trees, d, rng, n_points) -> np.ndarray:
    """Per tree: volume of ``{x : |x| <= R, some alive y has |x + y| <= radius}``."""
    if d == 1:
        y = alive.pos[:, 0]
        lo = np.clip(-y - radius, -R, R)
        hi = np.clip(-y + radius, -R, R)
        keep = hi > lo
        return _union_length_1d(alive.tree[keep], lo[keep], hi[keep], n_trees)
    out = np.zeros(n_trees)
    if alive.tree.size == 0:
        return out
    trees = np.unique(alive.tree)
    sep = 4.0 * (R + radius) + 1.0
    pts_particles = np.column_stack([-alive.pos, alive.tree * sep])
    kd = cKDTree(pts_particles)
    pts = uniform_ball(rng, trees.size * n_points, d, R)
    lab = np.repeat(trees, n_points)
    dist, _ = kd.query(np.column_stack([pts, lab * sep]), k=1, distance_upper_bound=radius)
    hits = np.bincount(np.searchsorted(trees, lab[np.isfinite(dist)]), minlength=trees.size)
    out[trees] = ball_volume(d, R) * hits / n_points
    return out


class SurvivalIntegral(NamedTuple):
    t: np.ndarray
    per_tree: np.ndarray  # (reps, T)
    estimate: np.ndarray
    se: np.ndarray
    window: np.ndarray  # radius per t
    window_volume: np.ndarray

    def decreasing(self, nse: float = 2.0) -> bool:
        """Each consecutive drop exceeds ``nse`` standard errors of the paired difference."""
        diff = self.per_tree[:, :-1] - self.per_tree[:, 1:]
        n = diff.shape[0]
        return bool(np.all(diff.mean(0) > nse * diff.std(0, ddof=1) / math.sqrt(n)))


def survival_integral(
    model,
    i: int,
    t_values,
    radius: float,
    L: float,
    reps: int,
    rng,
    window_exponent: float | None = None,
    n_points: int = 256,
) -> SurvivalIntegral:
    """Estimate of ``int_{|x| <= L t^e} P_{x,i}{N_t(B x K) > 0} dx`` with ``B = B(0, radius)``.

    By translation invariance ``P_{x,i}{N_t(B) > 0}`` is the probability
    that a tree started at the origin has an alive particle ``y`` with
    ``|x + y| <= radius``. For every simulated tree the volume of such ``x``
    inside the window is computed (exactly in one dimension, by uniform
    points otherwise); the estimate is the mean over trees.
    """
    t = np.asarray(t_values, dtype=float).ravel()
    res = _single_type_forest(model, i, reps, t, rng)
    d = model.d
    per = np.zeros((reps, t.size))
    Rs = np.array([window_radius(model, tt, L, exponent=window_exponent) for tt in t])
    for m in range(t.size):
        per[:, m] = covered_volume(res.alive[m], radius, Rs[m], reps, d, rng, n_points)
    est = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(reps) if reps > 1 else np.full(t.size, np.nan)
    vols = np.array([ball_volume(d, R) for R in Rs])
    return SurvivalIntegral(t, per, est, se, Rs, vols)


def survival_integral_at_zero(model, radius: float) -> float:
    """``t = 0`` value: the ancestor sits at ``x``, so the integrand is ``1{|x| <= radius}``."""
    return ball_volume(model.d, radius)


class PoissonFieldResult(NamedTuple):
    estimate: TailEstimate
    window: float
    n_ancestors: Moments


def poisson_field_survival(
    model, t: float, window: float, radius: float, reps: int, rng, L: float = 1.0, intensities=None
) -> PoissonFieldResult:
    """``P{N_t(B x K) > 0}`` from a Poisson field of age-0 ancestors on ``|x| <= window``.

    Raises
    ------
    WindowTooSmall
        If ``window`` is smaller than the radius ``L t^e`` of the relevant window.
    """
    need = window_radius(model, t, L)
    if window < need:
        raise WindowTooSmall(f"window {window:.6g} does not cover radius {need:.6g}")
    lam = np.asarray(model.intensities if intensities is None else intensities, dtype=float)
    vol = ball_volume(model.d, window)
    counts = rng.poisson(lam * vol, size=(reps, model.K))
    n_anc = counts.sum(axis=1)
    if n_anc.sum() == 0:
        return PoissonFieldResult(wilson_ci(0, reps), float(window), Moments.of(n_anc))
    group = np.repeat(np.arange(reps), n_anc)
    types = np.concatenate([np.repeat(np.arange(model.K), c) for c in counts])
    x = uniform_ball(rng, types.size, model.d, window)
    res = simulate_forest(model, x, types, [t], rng, tree=group, n_trees=reps)
    hit = _in_ball(res.alive[0], np.zeros(model.d), radius, reps)
    return PoissonFieldResult(proportion(hit), float(window), Moments.of(n_anc))
