"""Standard errors: placement bootstrap and sandwich formulas."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateDesignError, NetspillError
from .network import Network, spillovers
from .placement import place_missing_links

__all__ = [
    "BootstrapConfig",
    "VarianceReport",
    "bootstrap_se",
    "sandwich_known_eta",
    "sandwich_two_step",
    "numeric_derivative",
]


@dataclass(frozen=True)
class BootstrapConfig:
    """Sizes and seed of the two-level bootstrap.

    Attributes
    ----------
    outer_draws_P : int
        Number of random missing networks.
    inner_draws_M : int
        Pairs-bootstrap resamples per missing network.
    seed : int
    placement : str
        Only ``"uniform_missing"`` is supported.
    """

    outer_draws_P: int = 20
    inner_draws_M: int = 50
    seed: int = 0
    placement: str = "uniform_missing"

    def __post_init__(self):
        if self.outer_draws_P < 1 or self.inner_draws_M < 1:
            raise ValueError("P and M must be >= 1")
        if self.placement != "uniform_missing":
            raise ValueError(f"unknown placement {self.placement!r}")


@dataclass(frozen=True)
class VarianceReport:
    """Standard error with the pieces used to build it."""

    se: float
    method: str
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.se >= 0:
            raise ValueError("se must be >= 0")

    def to_dict(self) -> dict:
        return {"se": self.se, "method": self.method, "components": self.components}


def bootstrap_se(H: Network, x, y, d_bar_B: float, cfg: BootstrapConfig,
                 rows=None, n_bad_hint: Optional[int] = None) -> VarianceReport:
    """Two-level bootstrap standard error of the corrected estimator.

    For each of ``P`` outer draws, ``round(N * d_bar_B)`` unit links are
    placed uniformly at random over the empty off-diagonal cells of ``H`` in
    the eligible rows.  For each such ``B``, ``M`` pairs-bootstrap resamples
    of the nodes are drawn and the corrected estimate
    ``sum(s y) / (sum(s^2) + sum(s B x))`` is recomputed.  The result is the
    standard deviation of all ``P * M`` estimates around their mean.

    Parameters
    ----------
    H : Network
    x, y : array_like
    d_bar_B : float
        Mean missing degree over all nodes.
    cfg : BootstrapConfig
    rows : array_like, optional
        Rows eligible for missing links (e.g. nodes at a reporting cap).
    n_bad_hint : int, optional
        When given together with no ``rows``, recorded in the output only.

    Raises
    ------
    InfeasiblePlacementError
        Not enough empty cells.
    """
    if d_bar_B < 0:
        raise ValueError("d_bar_B must be >= 0")
    P, M = cfg.outer_draws_P, cfg.inner_draws_M
    if P * M < 2:
        raise NetspillError("need at least two bootstrap draws")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = H.n
    s = spillovers(H, x)
    count = int(round(n * d_bar_B))
    children = np.random.SeedSequence(cfg.seed).spawn(P)
    draws = np.empty((P, M))
    for p, child in enumerate(children):
        rng = np.random.default_rng(child)
        B = place_missing_links(H, count, rng, rows=rows)
        bx = spillovers(B, x)
        idx = rng.integers(0, n, size=(M, n))
        ss, yy, bb = s[idx], y[idx], bx[idx]
        denom = np.sum(ss * ss, axis=1) + np.sum(ss * bb, axis=1)
        draws[p] = np.sum(ss * yy, axis=1) / denom
    flat = draws.ravel()
    center = flat.mean()
    se = float(np.sqrt(np.mean((flat - center) ** 2)))
    lo, hi = np.quantile(flat, [0.025, 0.975])
    comp = {"P": P, "M": M, "seed": cfg.seed, "placement": cfg.placement,
            "inner": "pairs", "links_placed": count, "mean": float(center),
            "percentile_ci": [float(lo), float(hi)],
            "restricted_rows": rows is not None}
    if n_bad_hint is not None:
        comp["n_bad_hint"] = int(n_bad_hint)
    return VarianceReport(se, "bootstrap", comp)


def sandwich_known_eta(H: Network, x, residuals, eta: float) -> VarianceReport:
    """Heteroskedasticity-robust standard error of ``beta_ols / (1 + eta)``.

    ``Var = mean(s^2 e^2) / mean(s^2)^2 / N / (1 + eta)^2`` with ``s = Hx``.
    At ``eta = 0`` this is the HC0 variance of the naive slope.
    """
    s = spillovers(H, x)
    e = np.asarray(residuals, dtype=float)
    n = s.size
    mxx = float(np.mean(s ** 2))
    if not mxx > 0:
        raise DegenerateDesignError("sampled spillovers are identically zero")
    mxox = float(np.mean(s ** 2 * e ** 2))
    var = mxox / mxx ** 2 / n / (1.0 + eta) ** 2
    return VarianceReport(float(np.sqrt(var)), "sandwich_known_eta",
                          {"M_xx": mxx, "M_xOx": mxox, "eta": float(eta), "var": var})


def numeric_derivative(fn: Callable[[float], float], theta: float, rel_step: float = 1e-5,
                       tol: float = 0.10) -> float:
    """Central difference of ``fn`` at ``theta`` with a step-size agreement check.

    Raises
    ------
    NetspillError
        If the derivatives at steps ``h`` and ``10 h`` differ by more than
        ``tol`` in relative terms.
    """
    h = rel_step * max(abs(theta), 1.0)

    def central(step):
        return (fn(theta + step) - fn(theta - step)) / (2 * step)

    d1 = central(h)
    d2 = central(10 * h)
    scale = max(abs(d1), abs(d2))
    if scale > 0 and abs(d1 - d2) > tol * scale:
        raise NetspillError(f"unstable derivative: {d1:.6g} vs {d2:.6g}")
    return d1


def sandwich_two_step(H: Network, x, residuals, eta_fn: Callable[[float], float],
                      theta_hat: float, theta_moment_residuals, beta_hat: float,
                      k11: float = -1.0) -> VarianceReport:
    """Standard error of the corrected slope with an estimated first step.

    First-step moments are ``h1_i`` (``theta_moment_residuals``, mean zero at
    ``theta_hat``) with mean derivative ``k11``; for ``h1_i = theta_i - theta``
    this is ``-1``.  The second step is ``h2_i = s_i e_i`` with
    ``e_i = y_i - (1 + eta) beta s_i`` (``residuals``).  With
    ``K22 = -(1 + eta) mean(s^2)`` and ``K21 = -eta'(theta) beta mean(s^2)``,

        V = (S22 + K21^2 S11 / K11^2 - 2 K21 S12 / K11) / K22^2,

    and the standard error is ``sqrt(V / N)``.
    """
    s = spillovers(H, x)
    e = np.asarray(residuals, dtype=float)
    h1 = np.asarray(theta_moment_residuals, dtype=float)
    n = s.size
    if h1.shape != s.shape:
        raise ValueError("theta_moment_residuals must have one entry per node")
    if k11 == 0:
        raise DegenerateDesignError("K11 is singular")
    mxx = float(np.mean(s ** 2))
    eta = float(eta_fn(theta_hat))
    deta = numeric_derivative(eta_fn, theta_hat)
    k22 = -(1.0 + eta) * mxx
    if k22 == 0:
        raise DegenerateDesignError("K22 is singular")
    k21 = -deta * beta_hat * mxx
    h2 = s * e
    s11 = float(np.mean(h1 * h1))
    s12 = float(np.mean(h1 * h2))
    s22 = float(np.mean(h2 * h2))
    core = s22 + k21 * s11 * k21 / k11 ** 2 - 2 * k21 * s12 / k11
    var = core / k22 ** 2 / n
    if var < 0:
        var = 0.0
    return VarianceReport(float(np.sqrt(var)), "sandwich_two_step",
                          {"K11": k11, "K21": k21, "K22": k22, "S11": s11, "S12": s12,
                           "S22": s22, "eta": eta, "deta": deta})
