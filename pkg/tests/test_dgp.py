import numpy as np
import pytest
from scipy import stats

from netspill.dgp import (DiscreteUniform, Fixed, LinearParams, PerNode, SarParams,
                          gen_group_network, gen_network, gen_network_lognormal,
                          gen_treatment_bernoulli, gen_treatment_copula, group_assignment,
                          law_from_dict, simulate_linear, simulate_sar)
from netspill.network import Network, in_degrees, spillovers


def test_gen_network_degrees_and_simplicity():
    rng = np.random.default_rng(0)
    G = gen_network(500, DiscreteUniform(1, 15), "binary", rng)
    A = G.to_dense()
    assert np.all(np.diag(A) == 0)
    assert set(np.unique(A)) <= {0.0, 1.0}
    d = G.row_nnz()
    assert d.min() >= 1 and d.max() <= 15
    assert abs(d.mean() - 8.0) < 0.4


def test_gen_network_partners_uniform():
    rng = np.random.default_rng(1)
    G = gen_network(2000, Fixed(10), "binary", rng)
    indeg_out = np.asarray(G.matrix.sum(axis=0)).ravel()
    # each node is a partner with probability 10 / 1999 for each other node
    assert abs(indeg_out.mean() - 10.0) < 1e-12
    assert abs(indeg_out.var() - 10.0) < 1.5


def test_inverse_degree_rows_sum_to_one():
    G = gen_network(300, DiscreteUniform(1, 15), "inverse_degree", np.random.default_rng(2))
    np.testing.assert_allclose(in_degrees(G), 1.0)


def test_per_node_law_and_errors():
    law = PerNode([2, 0, 1, 1])
    G = gen_network(4, law, "binary", np.random.default_rng(3))
    np.testing.assert_array_equal(G.row_nnz(), [2, 0, 1, 1])
    with pytest.raises(ValueError):
        gen_network(3, Fixed(3), "binary", np.random.default_rng(0))
    with pytest.raises(ValueError):
        DiscreteUniform(5, 2)
    assert law_from_dict({"law": "uniform", "lo": 1, "hi": 3}) == DiscreteUniform(1, 3)
    vals, p = law.pmf()
    np.testing.assert_array_equal(vals, [0, 1, 2])
    np.testing.assert_allclose(p, [0.25, 0.5, 0.25])


def test_group_network_stays_within_groups():
    groups = group_assignment([(3, 6), (2, 4)])
    assert groups.size == 26 and np.bincount(groups).tolist() == [6, 6, 6, 4, 4]
    lo = np.array([2, 2, 2, 1, 1])
    hi = np.array([4, 4, 4, 3, 3])
    G = gen_group_network(groups, lo, hi, "binary", np.random.default_rng(4))
    src, dst, _ = G.edges()
    assert np.all(groups[src] == groups[dst])
    d = G.row_nnz()
    assert np.all((d >= lo[groups]) & (d <= hi[groups]))
    with pytest.raises(ValueError):
        gen_group_network(groups, lo, np.array([6, 4, 4, 3, 3]), "binary", np.random.default_rng(0))


def test_lognormal_network_row_normalised():
    G = gen_network_lognormal(50, 1.0, 15.0, np.random.default_rng(5))
    np.testing.assert_allclose(in_degrees(G), 1.0)
    assert np.all(np.diag(G.to_dense()) == 0)


def test_bernoulli_treatment():
    x = gen_treatment_bernoulli(20000, 0.3, np.random.default_rng(6))
    assert set(np.unique(x)) == {0.0, 1.0}
    assert abs(x.mean() - 0.3) < 0.01
    with pytest.raises(ValueError):
        gen_treatment_bernoulli(3, 1.5)


def test_copula_treatment_marginal_and_dependence():
    rng = np.random.default_rng(7)
    d = rng.integers(0, 11, 5000)
    x = gen_treatment_copula(d, 5.0, 1.0, 10.0, rng)
    assert abs(x.mean() - 5.0) < 0.05 and abs(x.std() - 1.0) < 0.05
    assert stats.kendalltau(x, d)[0] > 0.7
    x1 = gen_treatment_copula(d, 5.0, 1.0, 1.0, rng)
    assert abs(stats.kendalltau(x1, d)[0]) < 0.05


def test_simulate_linear_noiseless():
    G = gen_network(100, DiscreteUniform(1, 5), "binary", np.random.default_rng(8))
    x = np.arange(100.0)
    y = simulate_linear(G, x, LinearParams(0.8, 0.0), np.random.default_rng(0))
    np.testing.assert_allclose(y, 0.8 * spillovers(G, x))


def test_simulate_sar_solves_equation():
    G = gen_network(200, DiscreteUniform(0, 10), "binary", np.random.default_rng(9)).scaled(0.1)
    x = gen_treatment_bernoulli(200, 0.3, np.random.default_rng(1))
    y = simulate_sar(G, x, SarParams(0.3, 0.8, 0.0), np.random.default_rng(2))
    np.testing.assert_allclose(y - 0.3 * spillovers(G, y), 0.8 * x, atol=1e-9)
    with pytest.raises(ValueError):
        SarParams(noise_sd=-1)
    assert isinstance(G, Network)
