import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netspill.network import Network, decompose, in_degrees
from netspill.sampling import (FixedChoice, GroupMembership, RandomSuperset, WeightThreshold,
                               apply_rule, candidate_bad_rows, fraction_correct, rule_from_dict,
                               rule_to_dict)


def dense_binary(n, density, seed):
    rng = np.random.default_rng(seed)
    a = (rng.random((n, n)) < density).astype(float)
    np.fill_diagonal(a, 0)
    return Network(a)


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 12), st.integers(0, 6), st.integers(0, 10 ** 6))
def test_fixed_choice_keeps_a_capped_subset(n, m, seed):
    G = dense_binary(n, 0.6, seed)
    H = apply_rule(FixedChoice(m), G, np.random.default_rng(seed))
    np.testing.assert_array_equal(H.row_nnz(), np.minimum(G.row_nnz(), m))
    # every sampled link is a true link with the same weight
    assert set(H.entries().items()) <= set(G.entries().items())
    dec = decompose(G, H)
    assert np.all(dec.missing.to_dense() >= 0)


def test_fixed_choice_subset_is_uniform():
    G = Network.from_entries(5, {(0, j): 1.0 for j in range(1, 5)})
    rng = np.random.default_rng(0)
    counts = Counter()
    reps = 6000
    for _ in range(reps):
        H = apply_rule(FixedChoice(2), G, rng)
        counts[tuple(sorted(j for (_, j) in H.entries()))] += 1
    assert set(counts) == set(itertools.combinations(range(1, 5), 2))
    expected = reps / 6
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 20.5  # 0.999 quantile with 5 degrees of freedom


def test_fixed_choice_strongest_keeps_heaviest():
    G = Network.from_entries(4, {(0, 1): 0.2, (0, 2): 0.9, (0, 3): 0.5})
    H = apply_rule(FixedChoice(2, "strongest"), G, np.random.default_rng(1))
    assert H.entries() == {(0, 2): 0.9, (0, 3): 0.5}


def test_group_membership_links_every_pair_in_group():
    groups = [0, 0, 0, 1, 1]
    G = Network.from_entries(5, {(0, 1): 1.0, (3, 4): 1.0})
    H = apply_rule(GroupMembership(groups), G)
    expect = {(i, j) for i in range(5) for j in range(5)
              if i != j and groups[i] == groups[j]}
    assert set(H.entries()) == expect
    dec = decompose(G, H)
    # spurious links are negative entries of B
    assert dec.missing.to_dense().min() == -1.0
    assert fraction_correct(dec) == pytest.approx(0.2)


def test_weight_threshold_is_strict():
    G = Network.from_entries(3, {(0, 1): 0.1, (0, 2): 0.3, (1, 0): 0.05})
    H = apply_rule(WeightThreshold(0.1), G)
    assert H.entries() == {(0, 2): 0.3}


def test_random_superset_pads_to_m():
    G = dense_binary(30, 0.1, 3)
    H = apply_rule(RandomSuperset(6, weight=0.5), G, np.random.default_rng(3))
    np.testing.assert_array_equal(H.row_nnz(), np.maximum(G.row_nnz(), 6))
    B = decompose(G, H).missing.to_dense()
    assert set(np.unique(B)) <= {-0.5, 0.0}
    np.testing.assert_allclose(-B.sum(axis=1), 0.5 * np.maximum(6 - G.row_nnz(), 0))


def test_random_superset_infeasible():
    with pytest.raises(ValueError):
        apply_rule(RandomSuperset(5), Network.empty(3), np.random.default_rng(0))


@pytest.mark.parametrize("rule", [FixedChoice(3), FixedChoice(2, "strongest"),
                                  WeightThreshold(0.25), RandomSuperset(4, 0.1),
                                  GroupMembership([0, 1, 1])])
def test_rule_dict_round_trip(rule):
    assert rule_from_dict(rule_to_dict(rule)) == rule


def test_rule_from_dict_errors():
    with pytest.raises(ValueError):
        rule_from_dict({"rule": "snowball"})
    with pytest.raises(ValueError):
        rule_from_dict({"rule": "group_membership"})
    assert rule_from_dict({"rule": "group_membership"}, groups=[0, 0]) == GroupMembership([0, 0])


def test_invalid_parameters():
    for bad in (lambda: FixedChoice(-1), lambda: FixedChoice(2, "random"),
                lambda: WeightThreshold(-0.1), lambda: RandomSuperset(-2)):
        with pytest.raises(ValueError):
            bad()


def test_candidate_rows_cover_bad_set_under_fixed_choice():
    G = dense_binary(40, 0.2, 5)
    rule = FixedChoice(4)
    H = apply_rule(rule, G, np.random.default_rng(5))
    mask = candidate_bad_rows(rule, H)
    assert np.all(mask[decompose(G, H).bad_set])
    assert candidate_bad_rows(WeightThreshold(0.1), H) is None
    assert in_degrees(H)[mask].min() == 4
