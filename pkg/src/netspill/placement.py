"""Random placement of missing links under the uniform-missingness assumption."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import InfeasiblePlacementError
from .network import Network

__all__ = ["place_missing_links"]


def _codes(net: Network) -> np.ndarray:
    c = net.matrix.tocoo()
    return np.sort(c.row.astype(np.int64) * net.n + c.col)


def _in_sorted(sorted_codes: np.ndarray, codes: np.ndarray) -> np.ndarray:
    if sorted_codes.size == 0:
        return np.zeros(codes.size, dtype=bool)
    pos = np.clip(np.searchsorted(sorted_codes, codes), 0, sorted_codes.size - 1)
    return sorted_codes[pos] == codes


def place_missing_links(H: Network, count: int, rng, rows=None, weight: float = 1.0) -> Network:
    """Draw a missing network ``B`` with ``|count|`` links placed uniformly.

    For ``count >= 0`` the links have weight ``weight`` and are spread
    uniformly over the empty off-diagonal cells of ``H`` in the eligible
    rows.  For ``count < 0`` the draw removes ``|count|`` sampled links:
    cells are picked uniformly from the support of ``H`` in the eligible rows
    and ``B`` holds ``-h_ik`` there.

    Parameters
    ----------
    H : Network
        Sampled network.
    count : int
        Number of links to place (negative for spurious links).
    rng : numpy.random.Generator
    rows : array_like of int or bool mask, optional
        Eligible rows; all rows by default.

    Raises
    ------
    InfeasiblePlacementError
        If there are fewer eligible cells than links to place.
    """
    n = H.n
    count = int(count)
    if rows is None:
        rows = np.arange(n)
    else:
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
    if count == 0 or rows.size == 0:
        if count != 0:
            raise InfeasiblePlacementError("no eligible rows for placement")
        return Network.empty(n)
    nnz = H.row_nnz()
    if count < 0:
        m = H.matrix
        starts = m.indptr[rows]
        sizes = nnz[rows]
        total = int(sizes.sum())
        if -count > total:
            raise InfeasiblePlacementError(
                f"cannot remove {-count} links from {total} sampled links")
        pick = rng.choice(total, size=-count, replace=False)
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        which = np.searchsorted(offsets, pick, side="right") - 1
        idx = starts[which] + (pick - offsets[which])
        r = rows[which]
        return Network(sp.coo_array((-m.data[idx], (r, m.indices[idx])), shape=(n, n)))

    free = (n - 1 - nnz[rows]).astype(float)
    total = int(free.sum())
    if count > total:
        raise InfeasiblePlacementError(
            f"cannot place {count} links in {total} eligible cells")
    h_codes = _codes(H)
    if count > total // 2:
        # dense request: enumerate eligible cells explicitly
        rr = np.repeat(rows, n)
        cc = np.tile(np.arange(n), rows.size)
        codes = rr.astype(np.int64) * n + cc
        ok = (rr != cc) & ~_in_sorted(h_codes, codes)
        chosen = rng.choice(codes[ok], size=count, replace=False)
    else:
        chosen = np.empty(0, dtype=np.int64)
        while chosen.size < count:
            k = count - chosen.size
            # uniform rows then rejection keeps every eligible cell equally likely
            r = rows[rng.integers(0, rows.size, size=k)]
            c = rng.integers(0, n - 1, size=k)
            c += c >= r
            codes = r.astype(np.int64) * n + c
            codes = codes[~_in_sorted(h_codes, codes)]
            chosen = np.unique(np.concatenate((chosen, codes)))
            if chosen.size > count:
                chosen = rng.choice(chosen, size=count, replace=False)
    return Network(sp.coo_array((np.full(chosen.size, float(weight)), (chosen // n, chosen % n)),
                                shape=(n, n)))
