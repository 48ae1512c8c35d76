import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from branchsim.errors import (
    EmptySample,
    InvalidGamma,
    OutOfDomain,
    PreconditionError,
    RegimeViolation,
)
from branchsim.lifetimes import (
    Exponential,
    LightPareto,
    ParetoTail,
    Weibull,
    bernstein_bound,
    law_from_dict,
    max_law_tail,
    nagaev_bound,
    truncated_mean_quad,
)

LAWS = [
    ParetoTail(0.5, 1.0),
    ParetoTail(1.0, 2.0),
    LightPareto(4.0, 0.5, 1.0),
    LightPareto(2.0, 1e4, 100.0),
    Exponential(1.5),
    Weibull(0.7, 2.0),
]


def test_sf_matches_scipy():
    x = np.array([0.1, 0.5, 1.0, 3.0, 50.0])
    assert np.allclose(ParetoTail(0.8, 1.0).sf(x), stats.pareto(b=0.8, scale=1.0).sf(np.maximum(x, 1.0)))
    assert np.allclose(Exponential(1.5).sf(x), stats.expon(scale=1 / 1.5).sf(x))
    assert np.allclose(Weibull(0.7, 2.0).sf(x), stats.weibull_min(0.7, scale=2.0).sf(x))


def test_light_pareto_tail_bound_holds_everywhere():
    law = LightPareto(4.0, 0.5, 1.0)
    x = np.geomspace(1e-3, 1e3, 400)
    assert np.all(law.sf(x) <= np.minimum(1.0, law.A * x**-law.eta) + 1e-15)


def test_light_pareto_rejects_loose_constant():
    with pytest.raises(PreconditionError):
        LightPareto(4.0, 0.1, 1.0)


def test_pareto_gamma_domain():
    with pytest.raises(InvalidGamma):
        ParetoTail(1.2)
    with pytest.raises(InvalidGamma):
        ParetoTail(0.0)


@pytest.mark.parametrize("law", LAWS, ids=lambda law: repr(law))
def test_truncated_mean_matches_quadrature(law):
    for a in (0.5, 3.0, 40.0, 250.0):
        assert math.isclose(law.truncated_mean(a), truncated_mean_quad(law, a), rel_tol=1e-8)


@pytest.mark.parametrize("law", LAWS, ids=lambda law: repr(law))
def test_sampling_follows_cdf(law):
    rng = np.random.default_rng(11)
    x = law.sample(rng, 20_000)
    res = stats.kstest(x, lambda v: law.cdf(np.asarray(v)))
    assert res.pvalue > 1e-3


@pytest.mark.parametrize("law", LAWS, ids=lambda law: repr(law))
def test_quantile_inverts_cdf(law):
    u = np.linspace(0.01, 0.99, 25)
    assert np.allclose(law.cdf(law.quantile(u)), u, atol=1e-10)


def test_quantile_domain():
    with pytest.raises(OutOfDomain):
        Exponential().quantile(1.0)
    with pytest.raises(OutOfDomain):
        Exponential().sf(-1.0)


def test_exponential_residual_is_memoryless():
    rng = np.random.default_rng(5)
    r = Exponential(2.0).sample_residual(rng, 3.0, size=20_000)
    assert stats.kstest(r, stats.expon(scale=0.5).cdf).pvalue > 1e-3


def test_pareto_residual_law():
    rng = np.random.default_rng(6)
    theta, g = 4.0, 0.5
    r = ParetoTail(g, 1.0).sample_residual(rng, theta, size=20_000)
    assert np.all(r >= 0)
    sf = lambda y: ((theta + y) / theta) ** -g
    assert stats.kstest(r, lambda y: 1 - sf(np.asarray(y))).pvalue > 1e-3


def test_mean_and_heaviness():
    assert ParetoTail(0.9).heavy and not ParetoTail(0.9).finite_mean
    assert LightPareto(4.0, 0.5, 1.0).finite_mean
    law = LightPareto(4.0, 0.5, 1.0)
    assert math.isclose(law.mean, truncated_mean_quad(law, 1e3), rel_tol=1e-8)


@given(st.sampled_from(LAWS))
def test_dict_roundtrip(law):
    assert law_from_dict(law.to_dict()) == law


def test_law_from_dict_unknown_kind():
    with pytest.raises(PreconditionError):
        law_from_dict({"kind": "gamma"})


def test_bernstein_value_and_vacuous_flag():
    b = bernstein_bound(10.0, 100.0, 1.0, 0.5)
    assert math.isclose(b.value, 2 * math.exp(-100 / 210))
    assert b.vacuous is False or b.value > 1
    assert bernstein_bound(0.0, 1.0, 1.0).vacuous


def test_nagaev_regime():
    assert math.isclose(nagaev_bound(10, 20, 3.0, 2.0).value, 2 * 10 * 20**-3 * 2.0)
    with pytest.raises(RegimeViolation):
        nagaev_bound(10, 5, 3.0, 2.0)


def test_max_law_conditional_without_y_is_exact():
    z = np.array([1.0, 10.0, 1e3])
    out = max_law_tail(ParetoTail(0.5, 1.0), None, z, 10, np.random.default_rng(0), method="conditional")
    assert np.allclose(out, 1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_max_law_normalization(seed):
    out = max_law_tail(ParetoTail(0.5, 1.0), Exponential(1.0), [1e3], 200_000, np.random.default_rng(seed))
    # sd of the estimate is about sqrt(1e3 * p(1 - p) / n) ~ 0.07
    assert 0.7 < out[0] < 1.3


def test_max_law_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(EmptySample):
        max_law_tail(ParetoTail(0.5), None, [1.0], 0, rng)
    with pytest.raises(PreconditionError):
        max_law_tail(ParetoTail(0.5), ParetoTail(0.7), [1.0], 10, rng)
