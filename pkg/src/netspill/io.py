"""Readers and writers for edge lists, node data and degree statistics."""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Optional

import numpy as np

from .network import DegreeStats, Network

__all__ = [
    "read_edges",
    "write_edges",
    "read_data",
    "write_data",
    "read_stats",
    "write_stats",
    "stats_to_dict",
    "stats_from_dict",
]


def read_edges(path, n: Optional[int] = None, symmetrize: bool = False) -> Network:
    """Read a ``src,dst[,weight]`` CSV with 0-based node ids.

    The link ``src -> dst`` is an in-link of ``dst``.  The node count is
    ``1 + max id`` unless ``n`` is given.  Undirected inputs can be
    symmetrized.
    """
    src, dst, w = [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"src", "dst"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: header must contain src,dst")
        has_w = "weight" in reader.fieldnames
        for row in reader:
            src.append(int(row["src"]))
            dst.append(int(row["dst"]))
            val = row.get("weight") if has_w else None
            w.append(float(val) if val not in (None, "") else 1.0)
    src = np.array(src, dtype=np.int64)
    dst = np.array(dst, dtype=np.int64)
    w = np.array(w, dtype=float)
    if n is None:
        n = int(max(src.max(initial=-1), dst.max(initial=-1)) + 1)
    if symmetrize:
        return _symmetric_max(n, src, dst, w)
    return Network.from_edges(n, src, dst, w)


def _symmetric_max(n, src, dst, w) -> Network:
    # each listed pair becomes a link both ways; repeated pairs keep the larger weight
    best = {}
    for a, b, c in zip(src.tolist(), dst.tolist(), w.tolist()):
        for key in ((b, a), (a, b)):
            best[key] = max(best.get(key, c), c)
    return Network.from_entries(n, best)


def write_edges(net: Network, path) -> None:
    src, dst, w = net.edges()
    order = np.lexsort((src, dst))
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["src", "dst", "weight"])
        for k in order:
            out.writerow([int(src[k]), int(dst[k]), repr(float(w[k]))])


def read_data(path, n: Optional[int] = None) -> dict:
    """Read ``node,x[,y][,w1,...]`` into arrays ordered by node id.

    Returns a dict with ``x``, ``y`` (or ``None``), ``W`` (or ``None``) and
    any other named columns.  Every node ``0..n-1`` must appear once.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "node" not in fields or "x" not in fields:
            raise ValueError(f"{path}: header must start with node,x")
        rows = list(reader)
    nodes = np.array([int(r["node"]) for r in rows], dtype=np.int64)
    if n is None:
        n = int(nodes.max()) + 1 if nodes.size else 0
    if nodes.size != n or np.unique(nodes).size != n or (n and (nodes.min() < 0 or nodes.max() >= n)):
        raise ValueError(f"{path}: expected each node id 0..{n - 1} exactly once")
    order = np.argsort(nodes)

    def col(name):
        return np.array([float(rows[k][name]) for k in order])

    out = {"x": col("x"), "y": col("y") if "y" in fields else None}
    extra = [f for f in fields if f not in ("node", "x", "y")]
    covs = [f for f in extra if re.fullmatch(r"w\d+", f)]
    out["W"] = np.column_stack([col(f) for f in covs]) if covs else None
    for f in extra:
        if f not in covs:
            out[f] = col(f)
    return out


def write_data(path, x, y=None, W=None, **extra) -> None:
    x = np.asarray(x, dtype=float)
    cols = {"x": x}
    if y is not None:
        cols["y"] = np.asarray(y, dtype=float)
    if W is not None:
        W = np.asarray(W, dtype=float).reshape(x.size, -1)
        for j in range(W.shape[1]):
            cols[f"w{j + 1}"] = W[:, j]
    for k, v in extra.items():
        cols[k] = np.asarray(v, dtype=float)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["node"] + list(cols))
        for i in range(x.size):
            out.writerow([i] + [repr(float(c[i])) for c in cols.values()])


def stats_to_dict(stats: DegreeStats) -> dict:
    d = {"d_H_bar": stats.mean_sampled_bad, "d_B_bar": stats.mean_missing_bad,
         "n_bad": stats.n_bad, "n": stats.n}
    if stats.conditional is not None:
        d["conditional"] = [{"d_h": k, "d_b_bar": v[0], "count": v[1]}
                            for k, v in sorted(stats.conditional.items())]
    if stats.treated_split is not None:
        d["treated_split"] = list(stats.treated_split)
    if stats.bin_width is not None:
        d["bin_width"] = stats.bin_width
    return d


def stats_from_dict(d: dict) -> DegreeStats:
    cond = None
    if d.get("conditional") is not None:
        cond = {float(e["d_h"]): (float(e["d_b_bar"]), e.get("count"))
                for e in d["conditional"]}
    split = tuple(d["treated_split"]) if d.get("treated_split") is not None else None
    mh = d.get("d_H_bar")
    mb = d.get("d_B_bar")
    return DegreeStats(None if mh is None else float(mh), None if mb is None else float(mb),
                       int(d["n_bad"]), int(d["n"]), cond, split, d.get("bin_width"))


def read_stats(path) -> DegreeStats:
    return stats_from_dict(json.loads(Path(path).read_text()))


def write_stats(stats: DegreeStats, path) -> None:
    Path(path).write_text(json.dumps(stats_to_dict(stats), indent=2, sort_keys=True) + "\n")
