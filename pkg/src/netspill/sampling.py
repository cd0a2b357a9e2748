"""Sampling rules that map a true network to the network a researcher observes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.sparse as sp

from .network import Decomposition, Network

__all__ = [
    "FixedChoice",
    "GroupMembership",
    "WeightThreshold",
    "RandomSuperset",
    "SamplingRule",
    "apply_rule",
    "fraction_correct",
    "rule_from_dict",
    "rule_to_dict",
    "candidate_bad_rows",
]


@dataclass(frozen=True)
class FixedChoice:
    """Each node reports at most ``m`` of its in-links.

    ``order="uniform"`` keeps a uniformly random subset; ``"strongest"``
    keeps the ``m`` heaviest links with random tie-breaking.  The cap counts
    links, not total weight.
    """

    m: int
    order: str = "uniform"

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")
        if self.order not in ("uniform", "strongest"):
            raise ValueError(f"unknown order {self.order!r}")


@dataclass(frozen=True)
class GroupMembership:
    """Every pair of distinct nodes in the same group is assumed linked (weight 1)."""

    groups: tuple

    def __init__(self, groups):
        g = np.asarray(groups)
        if g.ndim != 1:
            raise ValueError("groups must be a 1-d node -> group map")
        object.__setattr__(self, "groups", tuple(g.tolist()))


@dataclass(frozen=True)
class WeightThreshold:
    """Keep only links with weight strictly above ``tau``."""

    tau: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")


@dataclass(frozen=True)
class RandomSuperset:
    """Pad every node with fewer than ``m`` in-links up to ``m`` links.

    The added links come from non-neighbours drawn uniformly at random and
    carry weight ``weight``.  They are spurious, so the missing network has
    negative entries.
    """

    m: int
    weight: float = 1.0

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("m must be >= 0")


SamplingRule = Union[FixedChoice, GroupMembership, WeightThreshold, RandomSuperset]


def _row_ranks(rows: np.ndarray, order: np.ndarray, n: int) -> np.ndarray:
    """Rank of each entry within its row, given a row-major sort ``order``."""
    ranks = np.empty(rows.size, dtype=np.int64)
    counts = np.bincount(rows, minlength=n)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    ranks[order] = np.arange(rows.size) - starts[rows[order]]
    return ranks


def _fixed_choice(rule: FixedChoice, net: Network, rng) -> Network:
    c = net.matrix.tocoo()
    keys = rng.random(c.nnz)
    if rule.order == "uniform":
        order = np.lexsort((keys, c.row))
    else:
        order = np.lexsort((keys, -c.data, c.row))
    keep = _row_ranks(c.row, order, net.n) < rule.m
    return Network(sp.coo_array((c.data[keep], (c.row[keep], c.col[keep])), shape=(net.n, net.n)))


def _group_membership(rule: GroupMembership, net: Network) -> Network:
    groups = np.asarray(rule.groups)
    if groups.shape[0] != net.n:
        raise ValueError("group map must cover every node exactly once")
    rows, cols = [], []
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        r, c = np.meshgrid(members, members, indexing="ij")
        off = r != c
        rows.append(r[off])
        cols.append(c[off])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    return Network(sp.coo_array((np.ones(rows.size), (rows, cols)), shape=(net.n, net.n)))


def _weight_threshold(rule: WeightThreshold, net: Network) -> Network:
    m = net.matrix.copy()
    m.data = np.where(m.data > rule.tau, m.data, 0.0)
    return Network(m)


def _random_superset(rule: RandomSuperset, net: Network, rng) -> Network:
    n = net.n
    m = net.matrix
    need = np.maximum(rule.m - net.row_nnz(), 0)
    if np.any(need > n - 1 - net.row_nnz()):
        raise ValueError("not enough non-neighbours to pad every node to m links")
    rows, cols = [], []
    for i in np.flatnonzero(need):
        taken = set(m.indices[m.indptr[i]:m.indptr[i + 1]].tolist())
        taken.add(i)
        picked = []
        while len(picked) < need[i]:
            k = int(rng.integers(n))
            if k not in taken:
                taken.add(k)
                picked.append(k)
        rows.extend([i] * len(picked))
        cols.extend(picked)
    extra = sp.coo_array((np.full(len(rows), float(rule.weight)), (rows, cols)), shape=(n, n))
    return Network(m + extra)


def apply_rule(rule: SamplingRule, true_net: Network, rng=None) -> Network:
    """Apply a sampling rule to ``true_net`` and return the sampled network.

    Parameters
    ----------
    rule : SamplingRule
    true_net : Network
    rng : numpy.random.Generator, optional
        Needed by the randomised rules (fixed choice, random superset).
    """
    if rng is None:
        rng = np.random.default_rng()
    if isinstance(rule, FixedChoice):
        return _fixed_choice(rule, true_net, rng)
    if isinstance(rule, GroupMembership):
        return _group_membership(rule, true_net)
    if isinstance(rule, WeightThreshold):
        return _weight_threshold(rule, true_net)
    if isinstance(rule, RandomSuperset):
        return _random_superset(rule, true_net, rng)
    raise TypeError(f"unknown sampling rule {rule!r}")


def fraction_correct(dec: Decomposition) -> float:
    """Share of nodes whose in-links were all sampled correctly."""
    return 1.0 - dec.n_bad / dec.n if dec.n else 1.0


def rule_from_dict(d: dict, groups=None) -> SamplingRule:
    """Parse a rule declaration such as ``{"rule": "fixed_choice", "m": 5}``.

    ``groups`` supplies the node -> group map for ``group_membership`` when
    the declaration does not carry one.
    """
    kind = d.get("rule")
    if kind == "fixed_choice":
        return FixedChoice(int(d["m"]), d.get("order", "uniform"))
    if kind == "group_membership":
        g = d.get("groups", groups)
        if g is None:
            raise ValueError("group_membership needs a group map")
        return GroupMembership(g)
    if kind == "weight_threshold":
        return WeightThreshold(float(d["tau"]))
    if kind == "random_superset":
        return RandomSuperset(int(d["m"]), float(d.get("weight", 1.0)))
    raise ValueError(f"unknown sampling rule {kind!r}")


def rule_to_dict(rule: SamplingRule) -> dict:
    if isinstance(rule, FixedChoice):
        return {"rule": "fixed_choice", "m": rule.m, "order": rule.order}
    if isinstance(rule, GroupMembership):
        return {"rule": "group_membership", "groups": list(rule.groups)}
    if isinstance(rule, WeightThreshold):
        return {"rule": "weight_threshold", "tau": rule.tau}
    if isinstance(rule, RandomSuperset):
        return {"rule": "random_superset", "m": rule.m, "weight": rule.weight}
    raise TypeError(f"unknown sampling rule {rule!r}")


def candidate_bad_rows(rule: SamplingRule, sampled_net: Network):
    """Nodes a researcher can flag as possibly mis-sampled from the rule alone.

    Returns a boolean mask over nodes, or ``None`` when the rule carries no
    such information.  Under fixed choice these are the nodes that reported
    exactly ``m`` links.
    """
    if isinstance(rule, FixedChoice):
        return sampled_net.row_nnz() >= rule.m
    return None
