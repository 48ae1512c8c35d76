import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchsim.branching import (
    AliveSet,
    ball_volume,
    covered_volume,
    local_survival,
    mc_occupation_grid,
    mean_population,
    occupation_extremes,
    occupation_max_tails,
    poisson_field_survival,
    population_gf_complement,
    reduced_tree,
    simulate_forest,
    simulate_tree,
    survival_integral,
    survival_integral_at_zero,
    window_radius,
)
from branchsim.config import preset_model
from branchsim.errors import PopulationExplosion, PreconditionError, WindowTooSmall
from branchsim.lifetimes import Exponential
from branchsim.model import ModelSpec
from branchsim.offspring import FactorizedOffspring


def binary(d=1, alpha=2.0):
    return ModelSpec(d, (alpha,), (Exponential(1.0),), (FactorizedOffspring(1.0, 0.5),))


def test_non_extinction_closed_form():
    # critical binary splitting at rate 1: P(N_t > 0) = 2 / (2 + t)
    reps = 40_000
    res = simulate_forest(binary(), np.zeros((reps, 1)), np.zeros(reps, int), [1.0, 4.0], np.random.default_rng(0))
    surv = (res.alive_total() > 0).mean(axis=0)
    for p, t in zip(surv, (1.0, 4.0)):
        exact = 2 / (2 + t)
        assert abs(p - exact) < 4 * math.sqrt(exact * (1 - exact) / reps)


def test_mean_population_conserved():
    mom = mean_population(preset_model("finite-mean-subcritical"), 0, [5.0, 20.0], 10_000, np.random.default_rng(1))
    for m in mom:
        assert abs(m.mean - 1) <= 4 * m.se


def test_brownian_spread_of_alive_particles():
    reps = 20_000
    res = simulate_forest(binary(), np.zeros((reps, 1)), np.zeros(reps, int), [3.0], np.random.default_rng(2))
    x = res.alive[0].pos[:, 0]
    # every line performs Brownian motion with variance 2 per unit time
    assert abs(np.mean(x**2) / 6.0 - 1) < 0.05


def test_genealogy_consistency():
    model = preset_model("case-a")
    rng = np.random.default_rng(3)
    n = 300
    res = simulate_forest(model, np.zeros((n, 1)), np.zeros(n, int), [5.0, 10.0], rng, record=True)
    g = res.genealogy
    row = {int(i): r for r, i in enumerate(g.ids)}
    has_parent = g.parent >= 0
    assert all(row[int(p)] < r for r, p in zip(np.flatnonzero(has_parent), g.parent[has_parent]))
    assert np.allclose(g.birth[has_parent], g.death[[row[int(p)] for p in g.parent[has_parent]]])
    # alive counts and extremes agree with the recorded table
    for m, t in enumerate((5.0, 10.0)):
        assert g.alive_mask(t).sum() == res.alive_count[:, m].sum()
        for tr in range(0, n, 37):
            mu, sigma = occupation_extremes(g.subset(g.tree == tr), t)
            assert np.allclose(mu, res.mu[tr, m])
            assert np.allclose(sigma, res.sigma[tr, m])
    occ = g.line_occupation(10.0)[g.alive_mask(10.0)]
    assert np.allclose(occ.sum(axis=1), 10.0)


def test_reduced_tree_keeps_exact_ancestry():
    g = simulate_tree(binary(), (np.zeros(1), 0, 0.0), 6.0, np.random.default_rng(4))
    r = reduced_tree(g)
    alive = set(g.ids[g.alive_mask()].tolist())
    kept = set(r.ids.tolist())
    assert alive <= kept
    parent = dict(zip(g.ids.tolist(), g.parent.tolist()))
    expected = set()
    for pid in alive:
        while pid >= 0:
            expected.add(pid)
            pid = parent[pid]
    assert kept == expected
    with pytest.raises(PreconditionError):
        reduced_tree(g, 7.0)


def test_genealogy_csv(tmp_path):
    g = simulate_tree(binary(d=2), (np.zeros(2), 0, 0.0), 2.0, np.random.default_rng(5))
    path = tmp_path / "tree.csv"
    g.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["id", "parent", "tree", "type", "birth_t", "death_t", "birth_x0", "birth_x1", "death_x0", "death_x1"]
    assert len(rows) == len(g) + 1


def test_mu_at_most_sigma():
    model = preset_model("case-b1")
    res = simulate_forest(model, np.zeros((500, 1)), np.zeros(500, int), [10.0], np.random.default_rng(6))
    alive = res.alive_total()[:, 0] > 0
    assert np.all(res.mu[alive, 0] <= res.sigma[alive, 0] + 1e-12)
    assert np.all(np.isinf(res.mu[~alive, 0]))


def test_occupation_functionals_shapes():
    model = preset_model("finite-mean-subcritical")
    rng = np.random.default_rng(7)
    nu = mc_occupation_grid(model, 0, [2.0, 4.0], [0.5, 1.0, 3.0], 500, rng)
    assert len(nu) == 2 and len(nu[0]) == 2 and len(nu[0][0]) == 3
    assert all(nu[j][p][0].p_hat <= nu[j][p][2].p_hat for j in range(2) for p in range(2))
    mx = occupation_max_tails(model, 0, [2.0], [0.5, 1.5], 500, rng)
    assert mx[0][0][0].p_hat >= mx[0][0][1].p_hat


def test_gf_complement_at_zero_is_survival():
    m = population_gf_complement(binary(), 0, 2.0, [0.0], 20_000, np.random.default_rng(8))
    assert abs(m.mean - 0.5) < 4 * m.se


def test_aged_ancestor_exponential_is_unchanged():
    rng = np.random.default_rng(9)
    reps = 20_000
    res = simulate_forest(binary(), np.zeros((reps, 1)), np.zeros(reps, int), [2.0], rng, theta0=np.full(reps, 5.0))
    p = (res.alive_total()[:, 0] > 0).mean()
    assert abs(p - 0.5) < 4 * math.sqrt(0.25 / reps)


def test_population_cap():
    with pytest.raises(PopulationExplosion):
        simulate_forest(binary(), np.zeros((50, 1)), np.zeros(50, int), [3.0], np.random.default_rng(0), cap=20)


def test_local_survival_large_ball_is_survival():
    est = local_survival(binary(), (np.zeros(1), 0, 0.0), 2.0, np.zeros(1), 1e6, 20_000, np.random.default_rng(10))
    assert abs(est.p_hat - 0.5) < 4 * est.se


def _alive(tree, pos, K=1):
    pos = np.asarray(pos, dtype=float)
    return AliveSet(np.asarray(tree), np.zeros(len(tree), int), pos, np.zeros((len(tree), K)), None)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-6, 6), min_size=0, max_size=8), st.floats(0.1, 2.0))
def test_covered_length_1d_against_grid(ys, r):
    R = 5.0
    alive = _alive([0] * len(ys), np.array(ys).reshape(-1, 1))
    got = covered_volume(alive, r, R, 1, 1, None, 0)[0]
    x = np.linspace(-R, R, 200_001)
    covered = np.zeros_like(x, dtype=bool)
    for y in ys:
        covered |= np.abs(x + y) <= r
    assert abs(got - covered.mean() * 2 * R) < 1e-3


def test_covered_volume_2d_single_particle():
    alive = _alive([0, 2], [[0.0, 0.0], [10.0, 0.0]])
    vol = covered_volume(alive, 1.0, 3.0, 3, 2, np.random.default_rng(11), 40_000)
    assert abs(vol[0] - math.pi) < 0.05
    assert vol[1] == 0.0 and vol[2] == 0.0


def test_survival_integral_decreases():
    model = preset_model("finite-mean-subcritical")
    si = survival_integral(model, 0, [5.0, 20.0, 80.0], 1.0, 3.0, 20_000, np.random.default_rng(12))
    assert si.decreasing(2.0)
    assert np.all(si.estimate <= si.window_volume)
    assert survival_integral_at_zero(model, 1.0) == 2.0


def test_window_radius_regimes():
    assert window_radius(preset_model("case-a"), 100.0, 3.0) == pytest.approx(3.0 * 100.0)
    b2 = preset_model("case-b2")
    # effective mobility max(1/alpha1, gamma/alpha) = 0.9
    assert window_radius(b2, 100.0, 1.0) == pytest.approx(100.0 ** 0.95)


def test_poisson_field():
    model = preset_model("finite-mean-subcritical")
    with pytest.raises(WindowTooSmall):
        poisson_field_survival(model, 10.0, 1.0, 1.0, 10, np.random.default_rng(0))
    res = poisson_field_survival(model, 4.0, 30.0, 1.0, 200, np.random.default_rng(13))
    assert abs(res.n_ancestors.mean - 2 * 60.0) < 4 * math.sqrt(120 / 200) + 1
    assert 0.0 < res.estimate.p_hat <= 1.0


def test_ball_volume():
    assert ball_volume(1, 2.0) == 4.0
    assert ball_volume(3, 1.0) == pytest.approx(4 / 3 * math.pi)
