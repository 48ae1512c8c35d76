import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchsim.errors import GridMismatch, NotInLambda, OutOfDomain, PreconditionError
from branchsim.lifetimes import Exponential, ParetoTail
from branchsim.model import ModelSpec
from branchsim.offspring import (
    ExplicitOffspring,
    FactorizedOffspring,
    comparison_bounds,
    gf_eval,
    gf_iterate,
    in_lambda,
    lifetime_condition_check,
    matrix_convolution,
    mean_matrix_powers,
    offspring_from_dict,
    remainder_eval,
    sample_offspring,
    survival_probabilities,
    survival_sequence,
)

# Taylor coefficients of s + 0.6 (1 - s)^1.5 at 0, computed with mpmath
H_COEFFS = [0.6, 0.1, 0.225, 0.0375, 0.0140625, 0.00703125, 0.0041015625]


def test_count_table_matches_series():
    cum, resid = FactorizedOffspring(0.5, 0.6).count_table
    p = np.diff(cum, prepend=0.0)
    assert np.allclose(p[:7], H_COEFFS, atol=1e-15)
    # the k^-2.5 tail outlives the table; the untabulated mass is carried separately
    assert 0.0 < resid < 1e-9
    assert math.isclose(cum[-1] + resid, 1.0, rel_tol=1e-12)


def test_binary_splitting_table():
    cum, _ = FactorizedOffspring(1.0, 0.5).count_table
    assert np.allclose(cum, [0.5, 0.5, 1.0])


def test_sampled_mean_is_one():
    rng = np.random.default_rng(0)
    n = FactorizedOffspring(0.8, 0.5).sample_counts(rng, 400_000)
    # infinite variance: only a loose check on the mean is meaningful
    assert abs(n.mean() - 1.0) < 0.05
    assert np.bincount(n)[0] / n.size == pytest.approx(0.5, abs=0.005)


def test_multinomial_types():
    rng = np.random.default_rng(1)
    law = FactorizedOffspring(1.0, 0.5, (0.25, 0.75))
    x = sample_offspring(law, rng, 200_000)
    assert x.shape == (200_000, 2)
    assert np.allclose(x.mean(0), [0.25, 0.75], atol=0.01)
    assert sample_offspring(law, rng).shape == (2,)


def test_factorized_parameter_domain():
    with pytest.raises(PreconditionError):
        FactorizedOffspring(0.5, 0.9)
    with pytest.raises(PreconditionError):
        FactorizedOffspring(1.5, 0.1)
    with pytest.raises(PreconditionError):
        FactorizedOffspring(1.0, 0.5, (0.5, 0.6))


def test_gf_iterate_binary():
    law = [FactorizedOffspring(1.0, 0.5)]
    it = gf_iterate(law, 5, [0.0])
    assert np.allclose(it[:3, 0], [0.0, 0.5, 0.625])
    # frozen with mpmath
    assert abs(it[5, 0] - 0.77508150087669492) < 1e-15


def test_gf_iterate_two_types():
    laws = [FactorizedOffspring(1.0, 0.5, (0.7, 0.3)), FactorizedOffspring(1.0, 0.5, (0.4, 0.6))]
    assert np.allclose(gf_iterate(laws, 3, [0.0, 0.0])[-1], [0.6953125, 0.6953125], atol=1e-15)


def test_gf_domain():
    with pytest.raises(OutOfDomain):
        gf_eval([FactorizedOffspring(1.0, 0.5)], [1.2])
    with pytest.raises(PreconditionError):
        gf_eval([FactorizedOffspring(1.0, 0.5)], [0.2, 0.3])


@settings(max_examples=50)
@given(
    st.floats(0.05, 1.0),
    st.floats(0.05, 0.95),
    st.floats(0.0, 1.0),
    st.floats(0.0, 1.0),
)
def test_gf_properties(beta, cfrac, s, t):
    law = FactorizedOffspring(beta, cfrac / (1 + beta))
    lo, hi = sorted((s, t))
    f_lo, f_hi = law.gf(np.array([lo])), law.gf(np.array([hi]))
    assert f_lo <= f_hi + 1e-15  # monotone
    assert f_lo >= lo - 1e-15  # critical: f(s) >= s
    z = np.array([1.0 - hi])
    assert math.isclose(law.remainder(z), z[0] - (1.0 - law.gf(np.array([hi]))), abs_tol=1e-12)


def test_remainder_is_cancellation_free():
    laws = [FactorizedOffspring(0.5, 0.6)]
    z = np.array([[1e-12]])
    assert math.isclose(remainder_eval(laws, z)[0, 0], 0.6 * 1e-18, rel_tol=1e-12)


def test_explicit_law_matches_factorized_binary():
    ex = ExplicitOffspring({(0,): 0.5, (2,): 0.5})
    fa = FactorizedOffspring(1.0, 0.5)
    s = np.linspace(0, 1, 11)[:, None]
    assert np.allclose(ex.gf(s), fa.gf(s))
    assert np.allclose(ex.remainder(1 - s), fa.remainder(1 - s))
    assert offspring_from_dict(ex.to_dict()) == ex


def test_explicit_law_rejects_bad_probabilities():
    with pytest.raises(PreconditionError):
        ExplicitOffspring({(0,): 0.5, (2,): 0.6})


@pytest.mark.parametrize("beta,c,target,tol", [(1.0, 0.5, -1.0, 0.05), (0.5, 0.6, -2.0, 0.15), (0.3, 0.6, -1 / 0.3, 0.4)])
def test_survival_decay_exponent(beta, c, target, tol):
    seq = survival_sequence([FactorizedOffspring(beta, c)], 10_000, window=(1_000, 10_000))
    assert abs(seq.fits[0].slope - target) <= tol


def test_survival_binary_closed_form():
    # q_{n+1} = q_n - q_n^2 / 2 with q_0 = 1 behaves like 2 / n
    q = survival_probabilities([FactorizedOffspring(1.0, 0.5)], 20_000)[:, 0]
    assert abs(q[20_000] * 20_000 / 2 - 1) < 0.01


def test_survival_sequence_needs_length():
    with pytest.raises(PreconditionError):
        survival_sequence([FactorizedOffspring(1.0, 0.5)], 50)


def _swap_laws():
    # f_0(s) = s_1, f_1(s) = (s_0 + s_1) / 2
    return (ExplicitOffspring({(0, 1): 1.0}), ExplicitOffspring({(1, 0): 0.5, (0, 1): 0.5}))


def test_in_lambda():
    assert in_lambda([FactorizedOffspring(1.0, 0.5)], [0.3])
    assert not in_lambda(_swap_laws(), [0.9, 0.2])
    assert in_lambda(_swap_laws(), [0.4, 0.4])


def test_matrix_convolution_of_exponentials():
    # Gamma * Gamma for Exp(1) is the Gamma(2, 1) cdf
    dt = 0.01
    t = np.arange(0, 5 + dt / 2, dt)
    G = (1 - np.exp(-t))[None, None, :]
    out = matrix_convolution(G, G)[0, 0]
    exact = 1 - np.exp(-t) * (1 + t)
    assert np.max(np.abs(out - exact)) < 1e-4


def test_matrix_convolution_identity_and_shapes():
    t = np.linspace(0, 1, 11)
    A = np.ones((2, 2, t.size))
    step = np.ones((2, t.size))
    assert np.allclose(matrix_convolution(A, step), 2.0)
    with pytest.raises(GridMismatch):
        matrix_convolution(A, np.ones((2, 5)))


def _binary_exp_model(K=1):
    return ModelSpec(1, (2.0,) * K, (Exponential(1.0),) * K, (FactorizedOffspring(1.0, 0.5, (1.0,) * 1),))


def test_mean_matrix_powers_first():
    model = _binary_exp_model()
    t = np.linspace(0, 2, 21)
    pw = mean_matrix_powers(model.mean_matrix, model.lifetimes, t, 2)
    assert np.allclose(pw[0][0, 0], 1.0)
    assert np.allclose(pw[1][0, 0], 1 - np.exp(-t))


def test_comparison_bounds_bracket_closed_form():
    # binary splitting at rate 1: P(N_t > 0) = 2 / (2 + t)
    model = _binary_exp_model()
    t = np.linspace(0, 4, 401)
    exact = 2 / (2 + t)
    for n in (1, 3, 6):
        b = comparison_bounds(model, n, [0.0], t)
        assert np.all(b.lower[0] <= exact + 1e-3)
        assert np.all(exact <= b.upper[0] + 1e-3)


def test_comparison_bounds_require_lambda():
    model = ModelSpec(1, (2.0, 2.0), (Exponential(), Exponential()), _swap_laws())
    with pytest.raises(NotInLambda):
        comparison_bounds(model, 2, [0.9, 0.2], np.linspace(0, 1, 5))


def test_lifetime_condition():
    model = _binary_exp_model()
    res = lifetime_condition_check(model, 1.0, 5_000)
    assert res.ok and res.margin > 0
    assert res.required_tail_exponent == 2.0
    heavy = ModelSpec(1, (2.0,), (ParetoTail(0.5),), (FactorizedOffspring(1.0, 0.5),))
    with pytest.raises(PreconditionError):
        lifetime_condition_check(heavy, 1.0)


def test_lifetime_condition_fails_for_slow_tail():
    # n (1 - Gamma(n)) / q_n ~ n^(1 - 1.5) / (2 / n) grows like n^0.5
    from branchsim.lifetimes import LightPareto

    model = ModelSpec(1, (2.0,), (LightPareto(1.5, 1.0, 1.0),), (FactorizedOffspring(1.0, 0.5),))
    res = lifetime_condition_check(model, 1.0, 10_000)
    assert not res.ok
    assert abs(res.slopes[0] - 0.5) < 0.05


@pytest.mark.parametrize(
    "law",
    [
        FactorizedOffspring(0.3, 0.7, (0.2, 0.8)),
        FactorizedOffspring(1.0, 0.5, (0.5, 0.5)),
        ExplicitOffspring({(0, 0): 0.25, (1, 1): 0.5, (0, 2): 0.25}),
    ],
)
def test_gf_at_one(law):
    assert abs(law.gf(np.ones(2)) - 1.0) <= 1e-15
