"""Synthetic networks, treatment assignment and outcome simulation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy import stats

from .copula import sample_gumbel
from .network import Network, neumann_inverse_apply, spillovers

__all__ = [
    "DiscreteUniform",
    "Fixed",
    "PerNode",
    "DegreeLaw",
    "LinearParams",
    "SarParams",
    "gen_network",
    "gen_group_network",
    "group_assignment",
    "gen_network_lognormal",
    "gen_treatment_bernoulli",
    "gen_treatment_copula",
    "simulate_linear",
    "simulate_sar",
    "law_from_dict",
]


@dataclass(frozen=True)
class DiscreteUniform:
    """Integer degrees drawn uniformly from ``{lo, ..., hi}``."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo > self.hi or self.lo < 0:
            raise ValueError(f"invalid degree interval [{self.lo}, {self.hi}]")

    def draw(self, n: int, rng) -> np.ndarray:
        return rng.integers(self.lo, self.hi + 1, size=n)

    def pmf(self):
        v = np.arange(self.lo, self.hi + 1)
        return v, np.full(v.size, 1.0 / v.size)


@dataclass(frozen=True)
class Fixed:
    """Every node has the same degree."""

    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("degree must be >= 0")

    def draw(self, n: int, rng) -> np.ndarray:
        return np.full(n, self.value, dtype=np.int64)

    def pmf(self):
        return np.array([self.value]), np.array([1.0])


@dataclass(frozen=True)
class PerNode:
    """Explicit degree for each node."""

    sequence: tuple

    def __init__(self, sequence: Sequence[int]):
        seq = tuple(int(v) for v in sequence)
        if any(v < 0 for v in seq):
            raise ValueError("degrees must be >= 0")
        object.__setattr__(self, "sequence", seq)

    def draw(self, n: int, rng) -> np.ndarray:
        if n != len(self.sequence):
            raise ValueError(f"sequence has {len(self.sequence)} entries, need {n}")
        return np.array(self.sequence, dtype=np.int64)

    def pmf(self):
        v, c = np.unique(self.sequence, return_counts=True)
        return v, c / c.sum()


DegreeLaw = Union[DiscreteUniform, Fixed, PerNode]


def law_from_dict(d: dict) -> DegreeLaw:
    kind = d.get("law")
    if kind == "uniform":
        return DiscreteUniform(int(d["lo"]), int(d["hi"]))
    if kind == "fixed":
        return Fixed(int(d["value"]))
    if kind == "per_node":
        return PerNode(d["sequence"])
    raise ValueError(f"unknown degree law {kind!r}")


@dataclass(frozen=True)
class LinearParams:
    """Parameters of ``y = beta * G x + eps``."""

    beta: float = 0.8
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


@dataclass(frozen=True)
class SarParams:
    """Parameters of ``y = lam * G y + beta * x + eps``."""

    lam: float = 0.3
    beta: float = 0.8
    noise_sd: float = 1.0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def _draw_partners(d: np.ndarray, n: int, rng) -> np.ndarray:
    """Distinct non-self partners for every node, duplicates redrawn."""
    dmax = int(d.max()) if d.size else 0
    out = np.zeros((d.size, dmax), dtype=np.int64)
    todo = np.arange(d.size)
    cols = np.arange(dmax)
    while todo.size:
        cand = rng.integers(0, n - 1, size=(todo.size, dmax))
        cand += cand >= todo[:, None]
        active = cols < d[todo][:, None]
        marked = np.where(active, cand, -1 - cols)
        srt = np.sort(marked, axis=1)
        dup = np.any(srt[:, 1:] == srt[:, :-1], axis=1) if dmax > 1 else np.zeros(todo.size, bool)
        out[todo[~dup]] = cand[~dup]
        todo = todo[dup]
    return out


def _from_partners(partners: np.ndarray, d: np.ndarray, weights: np.ndarray, n: int) -> Network:
    active = np.arange(partners.shape[1]) < d[:, None]
    rows = np.broadcast_to(np.arange(d.size)[:, None], partners.shape)[active]
    cols = partners[active]
    w = np.broadcast_to(weights[:, None], partners.shape)[active]
    return Network(sp.coo_array((w, (rows, cols)), shape=(n, n)))


def _link_weights(d: np.ndarray, weights: str) -> np.ndarray:
    if weights == "binary":
        return np.ones(d.size)
    if weights == "inverse_degree":
        return 1.0 / np.maximum(d, 1)
    raise ValueError(f"unknown weight scheme {weights!r}")


def gen_network(n: int, law: DegreeLaw, weights: str = "binary", rng=None) -> Network:
    """Random directed network with prescribed in-degree law.

    Node ``i`` draws ``d_i`` from ``law`` and receives links from ``d_i``
    distinct partners chosen uniformly at random.

    Parameters
    ----------
    n : int
    law : DegreeLaw
    weights : {"binary", "inverse_degree"}
        ``"inverse_degree"`` gives every in-link of node ``i`` weight ``1/d_i``.
    rng : numpy.random.Generator
    """
    if rng is None:
        rng = np.random.default_rng()
    d = np.asarray(law.draw(n, rng), dtype=np.int64)
    if d.size and d.max() > n - 1:
        raise ValueError(f"degree {d.max()} impossible with {n} nodes")
    partners = _draw_partners(d, n, rng)
    return _from_partners(partners, d, _link_weights(d, weights), n)


def group_assignment(groups: Sequence) -> np.ndarray:
    """Node -> group id map for contiguous groups.

    ``groups`` is a list of ``(count, size)`` pairs, e.g. ``[(20, 25)]`` for
    twenty groups of twenty-five nodes.
    """
    sizes = [int(size) for count, size in groups for _ in range(int(count))]
    return np.repeat(np.arange(len(sizes)), sizes)


def gen_group_network(groups: np.ndarray, lo, hi, weights: str = "binary", rng=None) -> Network:
    """Random network whose links stay within groups.

    Each node draws an integer degree uniformly from ``[lo, hi]`` of its
    group and links to that many distinct members of its own group.

    Parameters
    ----------
    groups : ndarray of int
        Node -> group id.
    lo, hi : dict or array_like
        Degree bounds per group id.
    """
    if rng is None:
        rng = np.random.default_rng()
    groups = np.asarray(groups)
    n = groups.size
    d = np.zeros(n, dtype=np.int64)
    rows, cols = [], []
    for g in np.unique(groups):
        members = np.flatnonzero(groups == g)
        s = members.size
        a, b = int(lo[g]), int(hi[g])
        if a < 0 or b > s - 1 or a > b:
            raise ValueError(f"degree range [{a}, {b}] impossible in a group of {s}")
        dg = rng.integers(a, b + 1, size=s)
        keys = rng.random((s, s))
        np.fill_diagonal(keys, np.inf)
        order = np.argsort(keys, axis=1)
        take = np.arange(s)[None, :] < dg[:, None]
        rows.append(np.broadcast_to(members[:, None], (s, s))[take])
        cols.append(members[order][take])
        d[members] = dg
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    w = _link_weights(d, weights)[rows]
    return Network(sp.coo_array((w, (rows, cols)), shape=(n, n)))


def gen_network_lognormal(n: int, mu: float = 1.0, sigma2: float = 15.0, rng=None) -> Network:
    """Complete weighted network with log-normal intensities, rows summing to one.

    ``mu`` and ``sigma2`` are the mean and variance of the log intensity.
    """
    if n < 2:
        raise ValueError("need at least two nodes")
    if rng is None:
        rng = np.random.default_rng()
    w = np.exp(mu + np.sqrt(sigma2) * rng.standard_normal((n, n)))
    np.fill_diagonal(w, 0.0)
    w /= w.sum(axis=1, keepdims=True)
    return Network(w)


def gen_treatment_bernoulli(n: int, p: float, rng=None) -> np.ndarray:
    """Independent 0/1 treatments with success probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if rng is None:
        rng = np.random.default_rng()
    return (rng.random(n) < p).astype(float)


def gen_treatment_copula(degrees, mean: float, sd: float, theta: float, rng=None) -> np.ndarray:
    """Normal treatments coupled to node degree through a Gumbel copula.

    Copula pairs ``(u_x, u_d)`` are drawn and sorted by ``u_d``; the pair with
    the ``r``-th smallest ``u_d`` is given to the node with the ``r``-th
    smallest degree (ties in degree broken at random), which receives
    ``x = mean + sd * Phi^{-1}(u_x)``.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    if rng is None:
        rng = np.random.default_rng()
    degrees = np.asarray(degrees, dtype=float)
    n = degrees.size
    u = sample_gumbel(n, theta, rng)
    node_order = np.lexsort((rng.random(n), degrees))
    pair_order = np.argsort(u[:, 1], kind="stable")
    x = np.empty(n)
    x[node_order] = mean + sd * stats.norm.ppf(u[pair_order, 0])
    return x


def simulate_linear(net: Network, x, params: LinearParams, rng=None) -> np.ndarray:
    """Outcomes ``y = beta * G x + eps`` with normal noise."""
    if rng is None:
        rng = np.random.default_rng()
    s = spillovers(net, x)
    return params.beta * s + params.noise_sd * rng.standard_normal(net.n)


def simulate_sar(net: Network, x, params: SarParams, rng=None, tol: float = 1e-10) -> np.ndarray:
    """Outcomes solving ``y = lam * G y + beta * x + eps``."""
    if rng is None:
        rng = np.random.default_rng()
    x = np.asarray(x, dtype=float)
    eps = params.noise_sd * rng.standard_normal(net.n)
    return neumann_inverse_apply(net, params.lam, params.beta * x + eps, tol=tol)
