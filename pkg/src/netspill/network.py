"""Directed weighted networks, the sampled/missing split and Neumann solves.

Row ``i`` of every adjacency matrix holds the in-links of node ``i``: entry
``(i, j)`` is the strength of the link from ``j`` into ``i``.  Spillovers are
therefore plain matrix-vector products ``G @ x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DivergenceError

__all__ = [
    "Network",
    "Decomposition",
    "DegreeStats",
    "in_degrees",
    "decompose",
    "spillovers",
    "spectral_bound",
    "neumann_inverse_apply",
    "degree_stats",
]


def _canonical(mat, n: int) -> sp.csr_array:
    m = sp.csr_array(mat, shape=(n, n), dtype=float)
    m.sum_duplicates()
    m.eliminate_zeros()
    m.sort_indices()
    return m


class Network:
    """Immutable sparse directed network.

    Parameters
    ----------
    matrix : sparse matrix or ndarray of shape (n, n)
        Adjacency with in-links stored by row.  Explicit zeros are dropped
        and duplicate entries are summed.

    Raises
    ------
    ValueError
        If the matrix is not square or has a nonzero diagonal entry.
    """

    __slots__ = ("_m",)

    def __init__(self, matrix):
        if sp.issparse(matrix):
            shape = matrix.shape
        else:
            matrix = np.asarray(matrix, dtype=float)
            shape = matrix.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError(f"adjacency must be square, got shape {shape}")
        m = _canonical(matrix, shape[0])
        if np.any(m.diagonal() != 0):
            raise ValueError("self-loops are not allowed")
        if not np.all(np.isfinite(m.data)):
            raise ValueError("weights must be finite")
        self._m = m

    @classmethod
    def empty(cls, n: int) -> "Network":
        return cls(sp.csr_array((n, n), dtype=float))

    @classmethod
    def from_edges(cls, n: int, src, dst, weight=None) -> "Network":
        """Build from a list of links ``src -> dst`` (stored at ``(dst, src)``)."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.shape != dst.shape:
            raise DimensionError("src and dst must have equal length")
        w = np.ones(src.shape, dtype=float) if weight is None else np.asarray(weight, dtype=float)
        if w.shape != src.shape:
            raise DimensionError("weight must match src/dst length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
            raise ValueError(f"node ids must lie in [0, {n})")
        return cls(sp.coo_array((w, (dst, src)), shape=(n, n)))

    @classmethod
    def from_entries(cls, n: int, entries: dict) -> "Network":
        """Build from a mapping ``(i, j) -> g_ij`` in row (receiver) order."""
        if not entries:
            return cls.empty(n)
        ij = np.array(list(entries.keys()), dtype=np.int64)
        w = np.array(list(entries.values()), dtype=float)
        return cls(sp.coo_array((w, (ij[:, 0], ij[:, 1])), shape=(n, n)))

    @property
    def n(self) -> int:
        return self._m.shape[0]

    @property
    def matrix(self) -> sp.csr_array:
        """The underlying CSR matrix.  Treat as read-only."""
        return self._m

    @property
    def nnz(self) -> int:
        return self._m.nnz

    @property
    def is_binary(self) -> bool:
        return bool(np.all(self._m.data == 1.0))

    def support(self) -> sp.csr_array:
        """0/1 matrix marking the stored entries."""
        s = self._m.copy()
        s.data = np.ones_like(s.data)
        return s

    def row_nnz(self) -> np.ndarray:
        return np.diff(self._m.indptr)

    def to_dense(self) -> np.ndarray:
        return self._m.toarray()

    def entries(self) -> dict:
        c = self._m.tocoo()
        return {(int(i), int(j)): float(w) for i, j, w in zip(c.row, c.col, c.data)}

    def edges(self):
        """Return ``(src, dst, weight)`` arrays for the edge-list format."""
        c = self._m.tocoo()
        return c.col.astype(np.int64), c.row.astype(np.int64), c.data.copy()

    def scaled(self, factor: float) -> "Network":
        return Network(self._m * float(factor))

    def permuted(self, perm) -> "Network":
        """Relabel nodes so that old node ``perm[k]`` becomes node ``k``."""
        perm = np.asarray(perm)
        return Network(self._m[perm][:, perm])

    def __add__(self, other: "Network") -> "Network":
        _check_same_n(self, other)
        return Network(self._m + other._m)

    def __sub__(self, other: "Network") -> "Network":
        _check_same_n(self, other)
        return Network(self._m - other._m)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network) or other.n != self.n:
            return NotImplemented if not isinstance(other, Network) else False
        d = self._m - other._m
        d.eliminate_zeros()
        return d.nnz == 0

    __hash__ = None

    def __repr__(self) -> str:
        return f"Network(n={self.n}, nnz={self.nnz})"


def _check_same_n(a: Network, b: Network) -> None:
    if a.n != b.n:
        raise DimensionError(f"node counts differ: {a.n} vs {b.n}")


def _as_vector(v, n: int, name: str = "x") -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.shape[0] != n:
        raise DimensionError(f"{name} must have length {n}, got shape {v.shape}")
    return v


def in_degrees(net: Network) -> np.ndarray:
    """Weighted in-degree ``d_i = sum_j g_ij`` of every node."""
    return np.asarray(net.matrix.sum(axis=1), dtype=float).ravel()


def spillovers(net: Network, x) -> np.ndarray:
    """Weighted sum of neighbours' treatments, ``sum_j g_ij x_j``."""
    x = _as_vector(x, net.n)
    return net.matrix @ x


@dataclass(frozen=True)
class Decomposition:
    """Split of a true network into a sampled part and a signed remainder.

    Attributes
    ----------
    sampled : Network
        Observed network ``H``.
    missing : Network
        ``B = G - H``; negative entries are spurious sampled links.
    bad_set : ndarray of int
        Nodes whose row of ``B`` has a nonzero entry.
    """

    sampled: Network
    missing: Network
    bad_set: np.ndarray

    @property
    def n_bad(self) -> int:
        return int(self.bad_set.size)

    @property
    def n(self) -> int:
        return self.sampled.n

    @property
    def true(self) -> Network:
        return self.sampled + self.missing


def decompose(true_net: Network, sampled_net: Network) -> Decomposition:
    """Compute ``B = G - H`` and the set of incorrectly sampled nodes."""
    _check_same_n(true_net, sampled_net)
    missing = true_net - sampled_net
    bad = np.flatnonzero(missing.row_nnz() > 0)
    return Decomposition(sampled_net, missing, bad)


def spectral_bound(net: Network, iters: int = 100, rtol: float = 1e-6) -> float:
    """Upper bound on the spectral radius of ``net`` via power iteration.

    Iterates on ``I + |G|``, which is aperiodic, and returns the
    Collatz-Wielandt bound ``max_i (|G| v)_i / v_i`` of the current positive
    iterate.  This is a valid upper bound for the spectral radius of ``|G|``
    and hence of ``G`` at every step; iteration only tightens it.
    """
    a = abs(net.matrix)
    n = net.n
    if n == 0 or a.nnz == 0:
        return 0.0
    v = np.ones(n)
    best = np.inf
    for _ in range(iters):
        av = a @ v
        bound = float(np.max(av / v))
        gain = best - bound
        best = min(best, bound)
        if gain < rtol * best:
            break
        v = v + av
        v /= v.max()
    return best


def _lower_bound(net: Network, iters: int = 50) -> float:
    # Collatz-Wielandt lower bound; only meaningful for nonnegative matrices
    a = net.matrix
    v = np.ones(net.n)
    lo = 0.0
    for _ in range(iters):
        av = a @ v
        lo = max(lo, float(np.min(av / v)))
        v = v + av
        v /= v.max()
    return lo


def neumann_inverse_apply(net: Network, lam: float, v, tol: float = 1e-10,
                          max_terms: int = 10_000) -> np.ndarray:
    """Solve ``(I - lam G) w = v`` by summing the series ``sum_k (lam G)^k v``.

    The series is summed until the next term, which equals the residual of
    the current partial sum, drops below ``tol`` in the sup norm.

    Raises
    ------
    DivergenceError
        If the series does not converge within ``max_terms`` terms, or if a
        nonnegative network has a spectral radius at least ``1 / |lam|``.
    """
    v = _as_vector(v, net.n, "v")
    if lam == 0 or net.nnz == 0:
        return v.copy()
    a = net.matrix
    if np.all(a.data >= 0) and abs(lam) * _lower_bound(net) >= 1:
        raise DivergenceError(
            f"|lambda|={abs(lam):.4g} times spectral radius lower bound "
            f"{_lower_bound(net):.4g} is >= 1; estimated spectral bound "
            f"{spectral_bound(net):.4g}")
    w = v.copy()
    term = lam * (a @ v)
    k = 0
    # the residual of the current partial sum is minus the next term
    while np.max(np.abs(term)) >= 0.5 * tol:
        if k >= max_terms or not np.all(np.isfinite(term)):
            break
        w += term
        term = lam * (a @ term)
        k += 1
    resid = float(np.max(np.abs(w - lam * (a @ w) - v)))
    if not np.isfinite(resid) or resid >= tol:
        raise DivergenceError(
            f"Neumann series did not converge within {max_terms} terms "
            f"(residual {resid:.3g}); estimated spectral bound "
            f"{spectral_bound(net):.4g}, |lambda|={abs(lam):.4g}")
    return w


@dataclass(frozen=True)
class DegreeStats:
    """Aggregate degree statistics over the incorrectly sampled nodes.

    Attributes
    ----------
    mean_sampled_bad, mean_missing_bad : float or None
        Mean sampled and missing in-degree over the bad set; ``None`` when
        the bad set is empty.
    n_bad, n : int
        Size of the bad set and of the network.
    conditional : dict or None
        Maps a sampled-degree bucket to ``(mean missing degree, count)``.
    treated_split : tuple or None
        Mean missing degree (over all nodes) among nodes with a positive and
        with a zero sampled spillover.
    bin_width : float or None
        Bucket width used for ``conditional``; ``None`` means exact values.
    """

    mean_sampled_bad: Optional[float]
    mean_missing_bad: Optional[float]
    n_bad: int
    n: int
    conditional: Optional[dict] = None
    treated_split: Optional[tuple] = None
    bin_width: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_bad > self.n:
            raise ValueError("n_bad cannot exceed n")
        for v in (self.mean_sampled_bad, self.mean_missing_bad):
            if v is not None and not np.isfinite(v):
                raise ValueError("degree means must be finite")

    @property
    def share_bad(self) -> float:
        return self.n_bad / self.n if self.n else 0.0

    def bucket(self, d: float):
        """Bucket key for a sampled degree value."""
        if self.bin_width is None:
            return float(d)
        # rounding keeps keys such as 0.30000000000000004 readable
        return float(np.round(np.floor(d / self.bin_width + 1e-9) * self.bin_width, 10))


def degree_stats(dec: Decomposition, conditional: bool = False,
                 sampled_treated_spillovers=None,
                 bin_width: Optional[float] = None) -> DegreeStats:
    """Compute mean sampled/missing degrees over the bad set.

    Parameters
    ----------
    dec : Decomposition
    conditional : bool
        Also tabulate the mean missing degree per sampled-degree bucket.
    sampled_treated_spillovers : array_like, optional
        Sampled spillovers ``Hx``; when given, the mean missing degree among
        nodes with ``Hx > 0`` and ``Hx == 0`` is reported.
    bin_width : float, optional
        Bucket width for weighted degrees.  Exact values by default.
    """
    d_h = in_degrees(dec.sampled)
    d_b = in_degrees(dec.missing)
    bad = dec.bad_set
    n = dec.n
    if bad.size:
        mh = float(d_h[bad].mean())
        mb = float(d_b[bad].mean())
    else:
        mh = mb = None
    table = None
    if conditional:
        table = {}
        if bad.size:
            proto = DegreeStats(None, None, 0, n, bin_width=bin_width)
            keys = np.array([proto.bucket(d) for d in d_h[bad]])
            for k in np.unique(keys):
                sel = keys == k
                table[float(k)] = (float(d_b[bad][sel].mean()), int(sel.sum()))
    split = None
    if sampled_treated_spillovers is not None:
        s = _as_vector(sampled_treated_spillovers, n, "sampled_treated_spillovers")
        pos = s > 0
        split = (float(d_b[pos].mean()) if pos.any() else None,
                 float(d_b[~pos].mean()) if (~pos).any() else None)
    return DegreeStats(mh, mb, int(bad.size), n, table, split, bin_width)
