import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from netspill.copula import (CopulaModel, EmpiricalMarginal, eta_hat_copula,
                             expected_degree_given_x, fit_gumbel, gumbel_cdf, gumbel_h,
                             gumbel_logpdf, sample_gumbel)
from netspill.errors import DegenerateDesignError, FitError
from netspill.network import Network

unit = st.floats(1e-6, 1 - 1e-6)
thetas = st.floats(1.0, 20.0)


@settings(max_examples=200, deadline=None)
@given(unit, thetas)
def test_boundary_identities(u, theta):
    assert gumbel_cdf(u, 1.0, theta) == u
    assert gumbel_cdf(1.0, u, theta) == u
    assert gumbel_cdf(u, 0.0, theta) == 0.0
    assert gumbel_cdf(0.0, u, theta) == 0.0
    assert abs(gumbel_h(u, 0.0, theta)) <= 1e-12
    assert abs(gumbel_h(u, 1.0, theta) - 1.0) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(unit, unit)
def test_independence_at_theta_one(u, v):
    assert gumbel_cdf(u, v, 1.0) == pytest.approx(u * v, rel=1e-12)
    assert gumbel_h(u, v, 1.0) == pytest.approx(v, rel=1e-12)
    assert gumbel_logpdf(u, v, 1.0) == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.floats(1.0, 10.0))
def test_frechet_bounds_and_derivatives(u, v, theta):
    c = gumbel_cdf(u, v, theta)
    assert u * v - 1e-14 <= c <= min(u, v) + 1e-14
    h = 1e-6
    dcdu = (gumbel_cdf(u + h, v, theta) - gumbel_cdf(u - h, v, theta)) / (2 * h)
    assert gumbel_h(u, v, theta) == pytest.approx(dcdu, rel=1e-5, abs=1e-8)
    dhdv = (gumbel_h(u, v + h, theta) - gumbel_h(u, v - h, theta)) / (2 * h)
    assert np.exp(gumbel_logpdf(u, v, theta)) == pytest.approx(dhdv, rel=1e-4, abs=1e-6)


@pytest.mark.parametrize("theta", [1.0, 2.0, 5.0])
def test_density_integrates_to_one(theta):
    val, _ = integrate.dblquad(lambda v, u: np.exp(gumbel_logpdf(u, v, theta)),
                               1e-9, 1 - 1e-9, 1e-9, 1 - 1e-9, epsabs=1e-7)
    assert val == pytest.approx(1.0, abs=2e-3)


@pytest.mark.parametrize("theta", [1.0, 1.5, 3.0, 10.0])
def test_sampler_kendall_tau(theta):
    uv = sample_gumbel(20000, theta, np.random.default_rng(int(theta * 10)))
    assert np.all((uv > 0) & (uv < 1))
    tau = stats.kendalltau(uv[:, 0], uv[:, 1])[0]
    assert tau == pytest.approx(1 - 1 / theta, abs=0.015)
    # uniform margins
    assert stats.kstest(uv[:, 0], "uniform").pvalue > 1e-3


def test_sampler_matches_cdf():
    theta = 3.0
    uv = sample_gumbel(40000, theta, np.random.default_rng(2))
    for u, v in [(0.3, 0.4), (0.7, 0.2), (0.5, 0.5)]:
        emp = np.mean((uv[:, 0] <= u) & (uv[:, 1] <= v))
        assert emp == pytest.approx(gumbel_cdf(u, v, theta), abs=0.01)


@pytest.mark.parametrize("theta", [1.0, 2.0, 10.0])
def test_fit_recovers_theta(theta):
    rng = np.random.default_rng(3)
    uv = sample_gumbel(3000, theta, rng)
    x = stats.norm.ppf(uv[:, 0])
    d = np.exp(uv[:, 1])
    model = fit_gumbel(x, d)
    assert model.theta == pytest.approx(theta, rel=0.08)
    assert model.fit_n == 3000


def test_fit_errors():
    with pytest.raises(DegenerateDesignError):
        fit_gumbel(np.arange(5.0), np.arange(5.0))
    with pytest.raises(DegenerateDesignError):
        fit_gumbel(np.arange(20.0), np.ones(20))
    with pytest.raises(FitError):
        fit_gumbel(np.arange(50.0), np.arange(50.0), bounds=(1.0, 5.0))


def test_empirical_marginal():
    m = EmpiricalMarginal([3.0, 1.0, 2.0, 2.0])
    np.testing.assert_allclose(m.cdf([0.5, 1.0, 2.0, 10.0]), [0.2, 0.2, 0.6, 0.8])
    np.testing.assert_array_equal(m.quantile([0.1, 0.25, 0.26, 0.5, 0.51, 1.0]),
                                  [1.0, 1.0, 2.0, 2.0, 2.0, 3.0])
    np.testing.assert_allclose(m.breakpoints, [0.25, 0.75])
    assert m.mean() == 2.0
    with pytest.raises(ValueError):
        EmpiricalMarginal([])


def exact_conditional_mean(model, x):
    """Sum over the atoms of the degree marginal, no quadrature."""
    u = model.x_marginal.cdf(x)
    s = model.d_marginal.sorted
    n = s.size
    levels = np.arange(n + 1) / n
    h = gumbel_h(u, levels, model.theta)
    return float(np.sum(s * np.diff(h)))


@pytest.mark.parametrize("theta", [1.0, 2.5, 10.0])
def test_conditional_mean_matches_atom_sum(theta):
    rng = np.random.default_rng(4)
    d = rng.integers(0, 11, 400).astype(float)
    x = rng.standard_normal(400)
    model = CopulaModel(theta).with_marginals(x_sample=x, d_sample=d)
    for xv in (-1.5, 0.0, 0.7, 2.0):
        assert expected_degree_given_x(model, xv, tol=1e-8) == pytest.approx(
            exact_conditional_mean(model, xv), abs=1e-6)
    if theta == 1.0:
        assert expected_degree_given_x(model, 0.3) == pytest.approx(d.mean(), abs=1e-9)


def test_conditional_mean_increasing_in_x():
    rng = np.random.default_rng(5)
    model = CopulaModel(4.0).with_marginals(x_sample=rng.standard_normal(300),
                                            d_sample=rng.integers(0, 11, 300))
    vals = expected_degree_given_x(model, np.linspace(-2, 2, 9))
    assert np.all(np.diff(vals) >= -1e-9)
    with pytest.raises(ValueError):
        expected_degree_given_x(CopulaModel(2.0), 0.0)


def test_model_json_round_trip():
    model = CopulaModel(3.5, fit_n=10).with_marginals(x_sample=[1.0, 2.0], d_sample=[0, 1])
    blob = model.to_json()
    assert blob["theta"] == 3.5 and blob["marginals"]["x"]["n"] == 2
    back = CopulaModel.from_json(blob)
    assert back.theta == 3.5 and back.fit_n == 10
    with pytest.raises(ValueError):
        CopulaModel.from_json({"family": "clayton", "theta": 2})
    with pytest.raises(ValueError):
        CopulaModel(0.5)


def test_eta_hat_copula_independent_case():
    # theta = 1 and a degree marginal fixed at 4 give missing degree 4 - d_H at the cap
    H = Network.from_entries(4, {(0, 1): 1.0, (0, 2): 1.0, (1, 0): 1.0, (3, 2): 1.0})
    x = np.array([1.0, 2.0, 3.0, 4.0])
    model = CopulaModel(1.0).with_marginals(x_sample=x, d_sample=[4, 4, 4, 4])
    s = H.to_dense() @ x
    missing = np.array([2.0, 0.0, 0.0, 0.0]) * x.mean()
    expect = np.mean(s * missing) / np.mean(s ** 2)
    assert eta_hat_copula(H, x, model, 2) == pytest.approx(expect, rel=1e-9)
