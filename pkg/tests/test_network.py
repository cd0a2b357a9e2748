import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from netspill.errors import DimensionError, DivergenceError
from netspill.network import (DegreeStats, Network, decompose, degree_stats, in_degrees,
                              neumann_inverse_apply, spectral_bound, spillovers)


def random_net(n, density, rng, signed=False):
    a = (rng.random((n, n)) < density) * rng.uniform(0.1, 1.0, (n, n))
    if signed:
        a *= rng.choice([-1.0, 1.0], size=(n, n))
    np.fill_diagonal(a, 0.0)
    return Network(a)


@st.composite
def net_pairs(draw):
    n = draw(st.integers(2, 8))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    return n, random_net(n, 0.4, rng), random_net(n, 0.4, rng)


def test_canonical_form_drops_zeros_and_sums_duplicates():
    m = sp.coo_array(([1.0, 2.0, 0.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    net = Network(m)
    assert net.nnz == 1
    assert net.entries() == {(0, 1): 3.0}


def test_self_loops_and_non_finite_rejected():
    with pytest.raises(ValueError):
        Network(np.eye(3))
    a = np.zeros((2, 2))
    a[0, 1] = np.inf
    with pytest.raises(ValueError):
        Network(a)
    with pytest.raises(ValueError):
        Network(np.zeros((2, 3)))


def test_from_edges_stores_in_links_by_row():
    net = Network.from_edges(3, src=[0, 2], dst=[1, 1], weight=[0.5, 2.0])
    dense = net.to_dense()
    assert dense[1, 0] == 0.5 and dense[1, 2] == 2.0
    np.testing.assert_array_equal(in_degrees(net), [0.0, 2.5, 0.0])
    np.testing.assert_array_equal(net.row_nnz(), [0, 2, 0])
    src, dst, w = net.edges()
    assert Network.from_edges(3, src, dst, w) == net


def test_spillovers_and_dimension_check():
    net = Network.from_entries(3, {(0, 1): 1.0, (0, 2): 1.0, (2, 0): 0.5})
    np.testing.assert_allclose(spillovers(net, [1.0, 2.0, 4.0]), [6.0, 0.0, 0.5])
    with pytest.raises(DimensionError):
        spillovers(net, [1.0, 2.0])


def test_permuted_relabels_consistently():
    rng = np.random.default_rng(0)
    net = random_net(6, 0.5, rng)
    perm = rng.permutation(6)
    x = rng.standard_normal(6)
    p = net.permuted(perm)
    # old node perm[k] is new node k
    np.testing.assert_allclose(spillovers(p, x[perm]), spillovers(net, x)[perm])


@settings(max_examples=50, deadline=None)
@given(net_pairs())
def test_decomposition_round_trip(data):
    # G = H + B up to rounding for arbitrary real weights
    n, G, H = data
    dec = decompose(G, H)
    np.testing.assert_allclose((dec.sampled + dec.missing).to_dense(), G.to_dense())
    rows_with_b = np.flatnonzero(np.abs(G.to_dense() - H.to_dense()).sum(axis=1) > 0)
    np.testing.assert_array_equal(dec.bad_set, rows_with_b)


def test_degree_stats_small_example():
    G = Network.from_entries(4, {(0, 1): 1, (0, 2): 1, (0, 3): 1, (1, 0): 1, (2, 3): 1})
    H = Network.from_entries(4, {(0, 1): 1, (1, 0): 1, (2, 1): 1})
    dec = decompose(G, H)
    np.testing.assert_array_equal(dec.bad_set, [0, 2])
    s = degree_stats(dec, conditional=True, sampled_treated_spillovers=[0, 1, 0, 0])
    assert s.n_bad == 2 and s.n == 4 and s.share_bad == 0.5
    # node 0 misses two links; node 2 has a spurious link (2,1) and a missing link (2,3)
    assert s.mean_sampled_bad == 1.0
    assert s.mean_missing_bad == 1.0
    assert s.conditional == {1.0: (1.0, 2)}
    # nodes with Hx > 0: node 1 (d_B = 0); others: nodes 0, 2, 3 with d_B 2, 0, 0
    assert s.treated_split == (0.0, 2.0 / 3.0)


def test_degree_stats_empty_bad_set():
    G = Network.from_entries(3, {(0, 1): 1.0})
    s = degree_stats(decompose(G, G))
    assert s.n_bad == 0 and s.mean_missing_bad is None and s.share_bad == 0.0


def test_degree_stats_bucket_width():
    s = DegreeStats(1.0, 1.0, 1, 2, bin_width=0.25)
    assert s.bucket(0.6) == 0.5
    assert s.bucket(0.75) == 0.75


@pytest.mark.parametrize("seed", range(5))
def test_neumann_matches_dense_solve(seed):
    rng = np.random.default_rng(seed)
    net = random_net(30, 0.2, rng, signed=bool(seed % 2))
    lam = 0.9 / spectral_bound(net)
    v = rng.standard_normal(30)
    w = neumann_inverse_apply(net, lam, v, tol=1e-12)
    direct = np.linalg.solve(np.eye(30) - lam * net.to_dense(), v)
    np.testing.assert_allclose(w, direct, atol=1e-9)
    assert np.max(np.abs(w - lam * spillovers(net, w) - v)) < 1e-12


def test_neumann_trivial_cases_return_copies():
    v = np.arange(3.0)
    w = neumann_inverse_apply(Network.empty(3), 0.5, v)
    assert w is not v and np.array_equal(w, v)
    G = Network.from_entries(3, {(0, 1): 1.0})
    assert np.array_equal(neumann_inverse_apply(G, 0.0, v), v)


def test_neumann_divergence_raises_with_bound():
    # complete graph on 4 nodes has spectral radius 3
    G = Network(np.ones((4, 4)) - np.eye(4))
    with pytest.raises(DivergenceError, match="spectral"):
        neumann_inverse_apply(G, 0.5, np.ones(4))


def test_neumann_divergence_signed_network():
    # signed matrix with spectral radius 2: caught by the explicit residual check
    a = np.array([[0.0, 2.0], [2.0, 0.0]]) * np.array([[0, 1], [-1, 0]])
    G = Network(a)
    with pytest.raises(DivergenceError):
        neumann_inverse_apply(G, 0.9, np.ones(2), max_terms=200)


@pytest.mark.parametrize("seed", range(5))
def test_spectral_bound_is_upper_bound(seed):
    rng = np.random.default_rng(seed)
    net = random_net(25, 0.15, rng, signed=True)
    rho = np.max(np.abs(np.linalg.eigvals(net.to_dense())))
    b = spectral_bound(net)
    assert b >= rho - 1e-9
    assert b <= np.max(np.abs(net.to_dense()).sum(axis=1)) + 1e-9


def test_spectral_bound_exact_for_regular_graph():
    G = Network(np.ones((5, 5)) - np.eye(5))
    assert spectral_bound(G) == pytest.approx(4.0, rel=1e-9)
