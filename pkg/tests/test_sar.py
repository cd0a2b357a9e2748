import numpy as np
import pytest

from netspill.dgp import (DiscreteUniform, SarParams, gen_network, gen_treatment_bernoulli,
                          simulate_sar)
from netspill.errors import DegenerateDesignError, SingularCorrectionError
from netspill.network import Network, decompose, degree_stats, spillovers
from netspill.placement import place_missing_links
from netspill.sampling import FixedChoice, apply_rule, candidate_bad_rows
from netspill.sar import (InstrumentSet, build_instruments, build_instruments_corrected,
                          debias_tsls, eta_matrix, eta_matrix_feasible, eta_matrix_oracle,
                          expected_missing_apply, expected_missing_degrees,
                          sar_sandwich_variance, tsls)


def sar_instance(seed, noise=1.0, n=600):
    rng = np.random.default_rng(seed)
    G = gen_network(n, DiscreteUniform(0, 10), "binary", rng).scaled(0.1)
    x = gen_treatment_bernoulli(n, 0.3, rng)
    y = simulate_sar(G, x, SarParams(0.3, 0.8, noise), rng)
    rule = FixedChoice(5)
    H = apply_rule(rule, G, rng)
    return G, H, x, y, rule


def dense_tsls(z, J, y):
    P = J @ np.linalg.pinv(J.T @ J) @ J.T
    return np.linalg.solve(z.T @ P @ z, z.T @ P @ y)


def test_instruments_are_powers():
    G, H, x, _, _ = sar_instance(0)
    inst = build_instruments(H, x, 3)
    A = H.to_dense()
    np.testing.assert_allclose(inst.columns, np.column_stack([x, A @ x, A @ A @ x,
                                                              A @ A @ A @ x]))
    assert inst.labels == ("x", "Hx", "H^2x", "H^3x")
    with pytest.raises(ValueError):
        build_instruments(H, x, 0)
    with pytest.raises(ValueError):
        InstrumentSet(np.zeros((3, 2)), ("a",), 1)


def test_tsls_matches_dense_formula():
    G, H, x, y, _ = sar_instance(1)
    inst = build_instruments(H, x, 2)
    est = tsls(H, x, y, inst)
    z = np.column_stack([H.to_dense() @ y, x])
    np.testing.assert_allclose(est.theta, dense_tsls(z, inst.columns, y), rtol=1e-10)


def test_tsls_exact_on_true_network_without_noise():
    G, _, x, y, _ = sar_instance(2, noise=0.0)
    est = tsls(G, x, y, build_instruments(G, x, 2))
    np.testing.assert_allclose(est.theta, [0.3, 0.8], atol=1e-8)


def test_oracle_debiasing_exact_without_noise():
    # with no noise, (I + eta)^{-1} removes the omitted-links term exactly
    G, H, x, y, rule = sar_instance(3, noise=0.0)
    dec = decompose(G, H)
    naive = tsls(H, x, y, build_instruments(H, x, 2))
    assert abs(naive.lambda_hat - 0.3) > 0.01
    eta = eta_matrix_oracle(naive, dec.missing, y)
    assert np.all(eta[:, 1] == 0)
    fixed = debias_tsls(naive, eta, "oracle")
    np.testing.assert_allclose(fixed.theta, [0.3, 0.8], atol=1e-8)
    assert fixed.method == "tsls_corrected_oracle"


def test_eta_matrix_second_column_zero_and_linear():
    G, H, x, y, _ = sar_instance(4)
    est = tsls(H, x, y, build_instruments(H, x, 2))
    a = np.arange(600.0)
    b = np.ones(600)
    np.testing.assert_allclose(eta_matrix(est, 2 * a + b),
                               2 * eta_matrix(est, a) + eta_matrix(est, b), atol=1e-12)
    assert np.all(eta_matrix(est, a)[:, 1] == 0)


def test_debias_singular_guard():
    G, H, x, y, _ = sar_instance(5)
    est = tsls(H, x, y, build_instruments(H, x, 2))
    with pytest.raises(SingularCorrectionError):
        debias_tsls(est, np.array([[-1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        debias_tsls(est, np.zeros((2, 2)), mode="magic")
    assert debias_tsls(est, np.zeros((2, 2))).theta.tolist() == est.theta.tolist()


def test_expected_missing_apply_matches_enumeration():
    rng = np.random.default_rng(6)
    n = 7
    A = (rng.random((n, n)) < 0.3).astype(float)
    np.fill_diagonal(A, 0)
    H = Network(A * 0.5)
    e = np.array([1.0, 0.0, 2.0, -0.5, 0.3, 0.0, 1.5])
    v = rng.standard_normal(n)
    EB = np.zeros((n, n))
    for j in range(n):
        free = [k for k in range(n) if k != j and A[j, k] == 0]
        on = [k for k in range(n) if A[j, k] != 0]
        if e[j] > 0 and free:
            EB[j, free] = e[j] / len(free)
        elif e[j] < 0 and on:
            EB[j, on] = e[j] / len(on)
    np.testing.assert_allclose(expected_missing_apply(H, e, v), EB @ v, atol=1e-14)


def test_expected_missing_apply_matches_placement_average():
    G, H, x, _, rule = sar_instance(7)
    dec = decompose(G, H)
    rows = np.flatnonzero(candidate_bad_rows(rule, H))
    st = degree_stats(dec)
    e = expected_missing_degrees(st, rows)
    # link weights are 0.1, so the missing weight converts to a link count
    count = int(round(st.n_bad * st.mean_missing_bad / 0.1))
    rng = np.random.default_rng(0)
    draws = [spillovers(place_missing_links(H, count, rng, rows=rows, weight=0.1), x)
             for _ in range(400)]
    mc = np.mean(draws, axis=0)
    exact = expected_missing_apply(H, e, x)
    assert mc.sum() == pytest.approx(exact.sum(), rel=0.01)
    assert np.corrcoef(mc, exact)[0, 1] > 0.8


def test_expected_missing_degrees_shares_total():
    st = degree_stats(decompose(Network.from_entries(4, {(0, 1): 1.0, (0, 2): 1.0}),
                                Network.from_entries(4, {(0, 1): 1.0})))
    np.testing.assert_allclose(expected_missing_degrees(st), [0.25] * 4)
    np.testing.assert_allclose(expected_missing_degrees(st, [0, 3]), [0.5, 0, 0, 0.5])


def test_corrected_instruments_reduce_to_base_when_e_zero():
    G, H, x, y, _ = sar_instance(8)
    base = build_instruments(H, x, 2)
    corr = build_instruments_corrected(H, x, np.zeros(H.n), 2)
    np.testing.assert_array_equal(corr.columns, base.columns)
    assert set(corr.dropped) == {"E[B]x", "H E[B]x"}
    dw = build_instruments_corrected(H, x, np.full(H.n, 0.3), 2, form="degree_weighted")
    assert dw.dropped == ("d_B*Hx",)
    with pytest.raises(ValueError):
        build_instruments_corrected(H, x, np.zeros(H.n), 2, form="other")


def test_feasible_close_to_oracle():
    G, H, x, y, rule = sar_instance(9, n=1000)
    dec = decompose(G, H)
    rows = np.flatnonzero(candidate_bad_rows(rule, H))
    e = expected_missing_degrees(degree_stats(dec), rows)
    J = build_instruments_corrected(H, x, e, 2)
    base = tsls(H, x, y, J)
    orc = debias_tsls(base, eta_matrix_oracle(base, dec.missing, y), "oracle")
    fea = debias_tsls(base, eta_matrix_feasible(base, H, e, y), "feasible")
    np.testing.assert_allclose(fea.theta, orc.theta, atol=0.05)


def test_tsls_rank_deficient_instruments():
    G, H, x, y, _ = sar_instance(10)
    J = InstrumentSet(np.column_stack([x, 2 * x]), ("x", "2x"), 1)
    with pytest.raises(DegenerateDesignError):
        tsls(H, x, y, J)
    with pytest.raises(DegenerateDesignError):
        tsls(H, x, y, InstrumentSet(x[:, None], ("x",), 0))


def test_sandwich_reduces_to_textbook_2sls_covariance():
    G, H, x, y, _ = sar_instance(11)
    inst = build_instruments(H, x, 2)
    est = tsls(H, x, y, inst)
    z = np.column_stack([H.to_dense() @ y, x])
    res = y - z @ est.theta
    J = inst.columns
    P = J @ np.linalg.pinv(J.T @ J) @ J.T
    textbook = np.mean(res ** 2) * np.linalg.inv(z.T @ P @ z)
    np.testing.assert_allclose(sar_sandwich_variance(z, inst, res), textbook, rtol=1e-9)
    eta = np.array([[0.5, 0.0], [0.1, 0.0]])
    a = np.linalg.inv(np.eye(2) + eta)
    np.testing.assert_allclose(sar_sandwich_variance(z, inst, res, eta),
                               a @ textbook @ a.T, rtol=1e-9)
