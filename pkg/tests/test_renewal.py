import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from branchsim.config import preset_model
from branchsim.errors import NoConvergence, PreconditionError
from branchsim.lifetimes import Exponential, ParetoTail
from branchsim.model import ModelSpec
from branchsim.offspring import FactorizedOffspring
from branchsim.renewal import (
    empirical_occupation_cdf,
    exponential_rate_fit,
    occupation_tail_scan,
    occupation_type2_tails,
    renewal_count_growth,
    renewal_count_tails,
    simulate_chain,
    simulate_chains,
    simulate_occupations,
    simulate_renewal,
    solve_linear_system,
    stable_sum_constant,
    stable_sum_tails,
)


def _two_exp(rows=((0.5, 0.5), (0.5, 0.5)), rates=(1.0, 1.0)):
    laws = tuple(FactorizedOffspring(1.0, 0.5, r) for r in rows)
    return ModelSpec(1, (2.0, 2.0), tuple(Exponential(r) for r in rates), laws)


def test_chain_visits_stationary_frequency():
    M = np.array([[0.9, 0.1], [0.2, 0.8]])
    path = simulate_chain(M, 0, 60_000, np.random.default_rng(0))
    assert path.states[0] == 0
    assert abs(path.counts[0] / 60_000 - 2 / 3) < 0.02
    counts = simulate_chains(M, 1, 50, 4000, np.random.default_rng(1))
    assert np.all(counts.sum(axis=1) == 50)
    assert np.all(counts[:, 1] >= 1)


def test_single_path_bookkeeping():
    model = preset_model("case-a")
    path = simulate_renewal(model, 0, 500.0, np.random.default_rng(2))
    assert math.isclose(path.occupation.sum(), 500.0, rel_tol=1e-12)
    assert path.states[0] == 0
    assert path.n_t == path.counts.sum()
    assert path.cumulative[path.n_t] > 500.0
    assert path.residual[path.states[path.n_t]] > 0


def test_exponential_single_type_count_is_poisson():
    model = ModelSpec(1, (2.0,), (Exponential(1.0),), (FactorizedOffspring(1.0, 0.5),))
    batch = simulate_occupations(model, 0, [3.0, 10.0], 20_000, np.random.default_rng(3))
    assert np.allclose(batch.occupation[:, :, 0], [3.0, 10.0])
    for m, t in enumerate((3.0, 10.0)):
        assert abs(batch.n_t[:, m].mean() - t) < 4 * math.sqrt(t / 20_000)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.5, 30.0))
def test_occupations_sum_to_horizon(seed, t):
    model = preset_model("occupation-tail")
    b = simulate_occupations(model, 0, [t / 2, t], 200, np.random.default_rng(seed))
    assert np.allclose(b.occupation.sum(axis=2), [t / 2, t])
    assert np.all(b.n_t[:, 1] >= b.n_t[:, 0])
    assert np.all(b.visits.sum(axis=2) == b.n_t)


def test_batch_agrees_with_single_paths():
    model = preset_model("case-a")
    t = 20.0
    rng = np.random.default_rng(4)
    single = np.array([simulate_renewal(model, 0, t, rng).occupation[0] for _ in range(4000)])
    batch = simulate_occupations(model, 0, [t], 4000, np.random.default_rng(5)).occupation[:, 0, 0]
    assert stats.ks_2samp(single, batch).pvalue > 1e-3


def test_count_growth_exponent():
    g = renewal_count_growth(preset_model("renewal-only"), [1e3, 1e4, 1e5], 1000, np.random.default_rng(6))
    assert abs(g.fit.slope - 0.5) < 0.05


def test_count_tails_shapes():
    res = renewal_count_tails(preset_model("renewal-only"), 1e4, 0.05, 0.2, 2000, np.random.default_rng(7))
    assert res.lower.at_most(res.lower_bound)
    assert res.upper_threshold == pytest.approx(1e4**0.7)
    with pytest.raises(PreconditionError):
        renewal_count_tails(preset_model("renewal-only"), 1e4, 0.0, 0.2, 10, np.random.default_rng(0))


def test_occupation_scan_decays():
    scan = occupation_tail_scan(preset_model("occupation-tail"), [1e3, 3e3, 1e4], 0.05, 5000, np.random.default_rng(8))
    p = [e.p_hat for e in scan.estimates]
    assert p[0] > p[1] > p[2]
    assert scan.fit.slope <= scan.bound_exponents["1-eta"] + 0.5


def test_type2_tails():
    out = occupation_type2_tails(preset_model("occupation-tail"), 1e3, 2000, np.random.default_rng(9))
    assert len(out) == 1 and out[0].j == 1
    assert out[0].upper_threshold == pytest.approx(1e3**0.7)


def test_stable_sum_levy_limit():
    # S_n / n^2 for Pareto(1/2, 1) tends to a Levy law with P(X > d) = erf(sqrt(pi / (4 d)))
    res = stable_sum_tails(ParetoTail(0.5, 1.0), 500, 20_000, np.random.default_rng(10), d_n=10.0, c_n=0.05)
    limit = special.erf(math.sqrt(math.pi / 40))
    assert abs(res.upper.p_hat - limit) < 4 * res.upper.se
    assert res.upper.at_most(res.upper_bound)
    assert res.lower.at_most(res.lower_bound)


def test_stable_sum_constant_value():
    assert stable_sum_constant(0.5) == pytest.approx(6.0 * 1.0**2)


def test_exponential_rate_fit():
    n = np.arange(10)
    fit = exponential_rate_fit(n, 3.0 * np.exp(-0.7 * n))
    assert fit.slope == pytest.approx(-0.7)
    assert exponential_rate_fit([1, 2, 3], [0.1, 0.0, 0.0]) is None


def test_solver_single_type_is_degenerate():
    model = ModelSpec(1, (2.0,), (Exponential(1.0),), (FactorizedOffspring(1.0, 0.5),))
    g = solve_linear_system(model, 2.0, 0.05)
    assert g.alpha(0, 0, 2.0, 1.0) < 1e-8
    assert g.alpha(0, 0, 2.0, 2.0) == 1.0


def test_solver_exponential_two_type_against_simulation():
    laws = (FactorizedOffspring(1.0, 0.5, (0.0, 1.0)), FactorizedOffspring(1.0, 0.5, (0.3, 0.7)))
    model = ModelSpec(1, (2.0, 2.0), (Exponential(1.0), Exponential(1.0)), laws)
    g = solve_linear_system(model, 4.0, 0.01)
    emp = empirical_occupation_cdf(model, 0, [4.0], [0.5, 2.0], 40_000, np.random.default_rng(11))
    for q, a in enumerate((0.5, 2.0)):
        assert abs(g.alpha(0, 1, 4.0, a) - emp[1][0][q].p_hat) < 4 * emp[1][0][q].se + 1e-3


def test_solver_matches_monte_carlo_heavy():
    model = preset_model("case-a")
    g = solve_linear_system(model, 6.0, 0.02)
    assert g.residual <= 1e-8
    t_vals, a_vals = [3.0, 6.0], [0.9, 2.4, 4.5]
    emp = empirical_occupation_cdf(model, 0, t_vals, a_vals, 50_000, np.random.default_rng(12))
    for j in range(2):
        for p, t in enumerate(t_vals):
            for q, a in enumerate(a_vals):
                e = emp[j][p][q]
                assert abs(g.alpha(0, j, t, a) - e.p_hat) <= 4 * max(e.se, 1 / 50_000) + 2e-3


def test_solver_grid_checks(tmp_path):
    model = _two_exp()
    with pytest.raises(PreconditionError):
        solve_linear_system(model, 1.0, 0.3)
    with pytest.raises(NoConvergence):
        solve_linear_system(model, 2.0, 0.1, max_iter=2)
    g = solve_linear_system(model, 1.0, 0.1)
    with pytest.raises(PreconditionError):
        g.alpha(0, 0, 2.0, 0.5)
    g.write_csv(tmp_path / "a.csv")
    rows = (tmp_path / "a.csv").read_text().splitlines()
    assert rows[0] == "t,a,i,j,alpha"
    assert len(rows) == 1 + 66 * 4
    tab = g.table([0.5, 1.0], [0.2, 0.4])
    assert tab.shape == (2, 2, 2, 2)
    assert np.all(np.diff(tab, axis=3) >= -1e-12)
