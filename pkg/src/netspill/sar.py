"""Two-stage least squares for the spatial autoregressive spillover model.

The outcome equation is ``y = lam * G y + beta * x + eps``.  Using the
sampled network gives regressors ``z = [H y, x]`` and an omitted term
``lam * B y``.  With ``P`` the projection on the instruments, the 2SLS
estimate converges to ``(I + eta) theta`` where

    eta = (z' P z)^{-1} z' P [B y, 0],

so ``theta = (I + eta)^{-1} theta_2sls``.  Only the first column of ``eta``
is nonzero because the omitted term loads on ``lam`` alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import DegenerateDesignError, MissingStatsError, SingularCorrectionError
from .network import DegreeStats, Network, spillovers

__all__ = [
    "InstrumentSet",
    "SarEstimate",
    "build_instruments",
    "build_instruments_corrected",
    "expected_missing_degrees",
    "expected_missing_apply",
    "tsls",
    "eta_matrix",
    "eta_matrix_oracle",
    "eta_matrix_feasible",
    "debias_tsls",
    "sar_sandwich_variance",
]


@dataclass(frozen=True)
class InstrumentSet:
    """Instrument columns with labels.

    Attributes
    ----------
    columns : ndarray of shape (n, k)
    labels : tuple of str
    truncation_k : int
        Highest power of ``H`` applied to ``x``.
    dropped : tuple of str
        Labels removed as linearly dependent on earlier columns.
    """

    columns: np.ndarray
    labels: tuple
    truncation_k: int
    dropped: tuple = ()

    def __post_init__(self):
        if self.columns.ndim != 2 or self.columns.shape[1] != len(self.labels):
            raise ValueError("one label per instrument column required")


@dataclass(frozen=True)
class SarEstimate:
    """Estimates of ``(lam, beta)``.

    Attributes
    ----------
    lambda_hat, beta_hat : float
    eta_matrix : ndarray of shape (2, 2) or None
    se : tuple or None
        Standard errors of ``(lambda_hat, beta_hat)``.
    method : str
        ``tsls_naive``, ``tsls_corrected_oracle`` or ``tsls_corrected_feasible``.
    """

    lambda_hat: float
    beta_hat: float
    eta_matrix: Optional[np.ndarray] = None
    se: Optional[tuple] = None
    method: str = "tsls_naive"
    fit: Optional[dict] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.lambda_hat) and np.isfinite(self.beta_hat)):
            raise DegenerateDesignError("non-finite SAR estimate")

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.lambda_hat, self.beta_hat])

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat,
            "beta_hat": self.beta_hat,
            "eta_matrix": None if self.eta_matrix is None else self.eta_matrix.tolist(),
            "se": None if self.se is None else list(self.se),
            "method": self.method,
        }


def build_instruments(H: Network, x, k: int = 2) -> InstrumentSet:
    """Columns ``[x, Hx, H^2 x, ..., H^k x]``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    x = np.asarray(x, dtype=float)
    cols = [x]
    for _ in range(k):
        cols.append(spillovers(H, cols[-1]))
    labels = ("x",) + tuple("Hx" if p == 1 else f"H^{p}x" for p in range(1, k + 1))
    return InstrumentSet(np.column_stack(cols), labels, k)


def expected_missing_degrees(stats: DegreeStats, candidates=None) -> np.ndarray:
    """Expected missing in-degree of every node from aggregate statistics.

    The total missing degree ``N^B * d_B`` is shared equally among the
    candidate rows (all rows when ``candidates`` is ``None``).
    """
    n = stats.n
    if stats.n_bad == 0:
        return np.zeros(n)
    if stats.mean_missing_bad is None:
        raise MissingStatsError("mean missing degree over the bad set is absent")
    total = stats.n_bad * stats.mean_missing_bad
    if candidates is None:
        return np.full(n, total / n)
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(candidates)] = True
    if not mask.any():
        raise MissingStatsError("no candidate rows for missing links")
    return np.where(mask, total / mask.sum(), 0.0)


def expected_missing_apply(H: Network, e, v) -> np.ndarray:
    """Compute ``E[B] v`` under uniformly placed missing links.

    Row ``j`` of ``E[B]`` spreads the expected missing degree ``e_j`` evenly.
    If ``e_j >= 0`` it goes over the cells that are neither diagonal nor
    sampled, each receiving ``e_j / (N - m_j)`` with ``m_j`` the number of
    sampled links plus one.  If ``e_j < 0`` (spurious links) it goes evenly
    over the sampled cells.
    """
    e = np.asarray(e, dtype=float)
    v = np.asarray(v, dtype=float)
    n = H.n
    nnz = H.row_nnz()
    supp = H.support()
    on_h = supp @ v
    free = n - (nnz + 1)
    out = np.zeros(n)
    pos = (e > 0) & (free > 0)
    out[pos] = e[pos] / free[pos] * (v.sum() - v[pos] - on_h[pos])
    neg = (e < 0) & (nnz > 0)
    out[neg] = e[neg] / nnz[neg] * on_h[neg]
    return out


def _prune(cols: np.ndarray, labels: tuple, rtol: float = 1e-10):
    """Drop columns that are (numerically) dependent on earlier ones."""
    keep = []
    q = np.zeros((cols.shape[0], 0))
    for j in range(cols.shape[1]):
        c = cols[:, j]
        norm = np.linalg.norm(c)
        if norm == 0:
            continue
        r = c - q @ (q.T @ c)
        rn = np.linalg.norm(r)
        if rn <= rtol * norm * max(1, cols.shape[0]) ** 0.5:
            continue
        q = np.column_stack([q, r / rn])
        keep.append(j)
    dropped = tuple(lab for j, lab in enumerate(labels) if j not in keep)
    return cols[:, keep], tuple(labels[j] for j in keep), dropped


def build_instruments_corrected(H: Network, x, e, k: int = 2,
                                form: str = "expected_path") -> InstrumentSet:
    """Instruments augmented with expected missing-path terms.

    Parameters
    ----------
    H : Network
    x : array_like
    e : array_like or DegreeStats
        Expected missing degree per node (see ``expected_missing_degrees``);
        a ``DegreeStats`` is converted with all rows as candidates.
    k : int
    form : {"expected_path", "degree_weighted"}
        ``expected_path`` adds ``E[B] x`` and ``H E[B] x``.
        ``degree_weighted`` adds ``e * Hx`` instead.

    Columns that are zero or collinear with earlier columns are dropped and
    listed in ``dropped``; with ``e = 0`` the result equals
    ``build_instruments``.
    """
    if isinstance(e, DegreeStats):
        e = expected_missing_degrees(e)
    e = np.asarray(e, dtype=float)
    base = build_instruments(H, x, k)
    x = np.asarray(x, dtype=float)
    if form == "expected_path":
        ebx = expected_missing_apply(H, e, x)
        extra = [ebx, spillovers(H, ebx)]
        labels = ("E[B]x", "H E[B]x")
    elif form == "degree_weighted":
        extra = [e * base.columns[:, 1]]
        labels = ("d_B*Hx",)
    else:
        raise ValueError(f"unknown instrument form {form!r}")
    cols = np.column_stack([base.columns] + extra)
    cols, labs, dropped = _prune(cols, base.labels + labels)
    return InstrumentSet(cols, labs, k, dropped)


def _projector(J: np.ndarray) -> np.ndarray:
    q, r, _ = sla.qr(J, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[-1] <= 1e-10 * d[0]:
        raise DegenerateDesignError("instrument matrix is rank deficient")
    return q


def tsls(net: Network, x, y, instruments: InstrumentSet) -> SarEstimate:
    """2SLS of ``y`` on ``z = [net @ y, x]`` with the given instruments.

    Raises
    ------
    DegenerateDesignError
        Fewer than two instruments, rank-deficient instruments or a singular
        ``z' P z``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    J = instruments.columns
    if J.shape[1] < 2:
        raise DegenerateDesignError("need at least two instruments")
    q = _projector(J)
    z = np.column_stack([spillovers(net, y), x])
    pz = q @ (q.T @ z)
    zpz = pz.T @ z
    if np.linalg.cond(zpz) > 1e12:
        raise DegenerateDesignError("z' P z is singular")
    theta = np.linalg.solve(zpz, pz.T @ y)
    return SarEstimate(float(theta[0]), float(theta[1]), method="tsls_naive",
                       fit={"z": z, "pz": pz, "zpz": zpz, "q": q})


def eta_matrix(est: SarEstimate, omitted) -> np.ndarray:
    """``(z' P z)^{-1} z' P [omitted, 0]`` for an omitted regressor ``omitted``."""
    fit = est.fit
    if fit is None:
        raise ValueError("estimate carries no first-stage fit")
    col = np.linalg.solve(fit["zpz"], fit["pz"].T @ np.asarray(omitted, dtype=float))
    return np.column_stack([col, np.zeros(2)])


def eta_matrix_oracle(est: SarEstimate, B: Network, y) -> np.ndarray:
    """Bias matrix built from the true missing network (simulation only)."""
    return eta_matrix(est, spillovers(B, y))


def eta_matrix_feasible(est: SarEstimate, H: Network, e, y) -> np.ndarray:
    """Bias matrix with ``B y`` replaced by its expectation ``E[B] y``."""
    return eta_matrix(est, expected_missing_apply(H, e, y))


def debias_tsls(est: SarEstimate, eta, mode: str = "oracle") -> SarEstimate:
    """Corrected estimate ``(I + eta)^{-1} theta_2sls``.

    Raises
    ------
    SingularCorrectionError
        If ``I + eta`` is singular.
    """
    eta = np.asarray(eta, dtype=float)
    a = np.eye(2) + eta
    if abs(np.linalg.det(a)) <= 1e-6:
        raise SingularCorrectionError(f"I + eta is singular: {eta.tolist()}")
    theta = np.linalg.solve(a, est.theta)
    if mode not in ("oracle", "feasible"):
        raise ValueError(f"unknown mode {mode!r}")
    return SarEstimate(float(theta[0]), float(theta[1]), eta_matrix=eta,
                       method=f"tsls_corrected_{mode}", fit=est.fit)


def sar_sandwich_variance(z, instruments, residuals, eta=None) -> np.ndarray:
    """Plug-in covariance of the (corrected) 2SLS estimate, scaled by ``1/N``.

    ``V = s2 A Q_hj A' / N`` with ``A = (I + eta)^{-1} Q_zz^{-1}``,
    ``Q_zz = z' P z / N``, ``Q_hj = (P z)'(P z) / N`` and ``s2`` the mean
    squared residual.  With ``eta = 0`` this is the textbook homoskedastic
    2SLS covariance ``s2 (z' P z)^{-1}``.
    """
    z = np.asarray(z, dtype=float)
    J = instruments.columns if isinstance(instruments, InstrumentSet) else np.asarray(instruments)
    res = np.asarray(residuals, dtype=float)
    n = z.shape[0]
    q = _projector(J)
    pz = q @ (q.T @ z)
    qzz = pz.T @ z / n
    qhj = pz.T @ pz / n
    eta = np.zeros((2, 2)) if eta is None else np.asarray(eta, dtype=float)
    try:
        a = np.linalg.solve(np.eye(2) + eta, np.linalg.inv(qzz))
    except np.linalg.LinAlgError as exc:
        raise DegenerateDesignError("singular plug-in matrices") from exc
    v = float(np.mean(res ** 2)) * a @ qhj @ a.T / n
    return 0.5 * (v + v.T)
