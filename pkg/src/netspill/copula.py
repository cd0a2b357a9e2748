"""Gumbel copula for treatment-degree dependence and the copula-based eta estimate."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import optimize, stats

from .errors import DegenerateDesignError, FitError, QuadratureError
from .network import Network, spillovers

__all__ = [
    "gumbel_cdf",
    "gumbel_logpdf",
    "gumbel_h",
    "sample_gumbel",
    "EmpiricalMarginal",
    "CopulaModel",
    "fit_gumbel",
    "expected_degree_given_x",
    "eta_hat_copula",
]


def _check_theta(theta: float) -> None:
    if not theta >= 1:
        raise ValueError(f"theta must be >= 1, got {theta}")


def _check_unit(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.any((a < 0) | (a > 1)) or np.any(np.isnan(a)):
        raise ValueError(f"{name} must lie in [0, 1]")
    return a


def gumbel_cdf(u, v, theta: float):
    """Gumbel copula ``C(u, v) = exp(-((-ln u)^theta + (-ln v)^theta)^(1/theta))``.

    Vectorised over ``u`` and ``v``.  ``C(0, v) = C(u, 0) = 0``.
    """
    _check_theta(theta)
    u = _check_unit(u, "u")
    v = _check_unit(v, "v")
    with np.errstate(divide="ignore"):
        a = -np.log(u)
        b = -np.log(v)
    # exact at the boundaries: C(u, 1) = u, C(1, v) = v
    out = np.exp(-(a ** theta + b ** theta) ** (1.0 / theta))
    out = np.where(v == 1, u, out)
    out = np.where(u == 1, v, out)
    out = np.where((u == 0) | (v == 0), 0.0, out)
    return out[()] if out.ndim == 0 else out


def gumbel_logpdf(u, v, theta: float):
    """Log density of the Gumbel copula on the open unit square."""
    _check_theta(theta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lx = np.log(-np.log(u))
    ly = np.log(-np.log(v))
    log_s = np.logaddexp(theta * lx, theta * ly)
    a = np.exp(log_s / theta)
    return (-a - np.log(u) - np.log(v) + (theta - 1) * (lx + ly)
            - (2 - 1 / theta) * log_s + np.log(a + (theta - 1)))


def gumbel_h(u, v, theta: float):
    """Conditional distribution ``dC(u, v)/du`` of ``V`` given ``U = u``.

    ``h(u, 0) = 0`` and ``h(u, 1) = 1``.
    """
    _check_theta(theta)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    out = np.empty(u.shape)
    inner = (v > 0) & (v < 1)
    out[v <= 0] = 0.0
    out[v >= 1] = 1.0
    if np.any(inner):
        ui, vi = u[inner], v[inner]
        lx = np.log(-np.log(ui))
        ly = np.log(-np.log(vi))
        log_s = np.logaddexp(theta * lx, theta * ly)
        log_h = -np.exp(log_s / theta) + (theta - 1) * lx - np.log(ui) + (1 / theta - 1) * log_s
        out[inner] = np.exp(log_h)
    return out[()] if out.ndim == 0 else out


def sample_gumbel(n: int, theta: float, rng=None) -> np.ndarray:
    """Draw ``n`` pairs from the Gumbel copula (Marshall-Olkin construction).

    A positive stable frailty with index ``1/theta`` is generated by Kanter's
    representation; returns an array of shape ``(n, 2)`` in ``(0, 1)``.
    """
    _check_theta(theta)
    if rng is None:
        rng = np.random.default_rng()
    e = rng.exponential(size=(n, 2))
    if theta == 1:
        return np.exp(-e)
    alpha = 1.0 / theta
    phi = rng.uniform(0.0, np.pi, size=n)
    w = rng.exponential(size=n)
    frailty = (np.sin(alpha * phi) / np.sin(phi) ** (1 / alpha)
               * (np.sin((1 - alpha) * phi) / w) ** ((1 - alpha) / alpha))
    return np.exp(-(e / frailty[:, None]) ** alpha)


class EmpiricalMarginal:
    """Empirical distribution of a sample with the ``rank/(n+1)`` scaling.

    Parameters
    ----------
    sample : array_like
    """

    def __init__(self, sample):
        s = np.sort(np.asarray(sample, dtype=float))
        if s.size == 0:
            raise ValueError("empty sample")
        self.sorted = s
        self.n = s.size

    def cdf(self, x):
        """Scaled rank ``#{s <= x} / (n + 1)``, clipped into ``(0, 1)``."""
        r = np.searchsorted(self.sorted, np.asarray(x, dtype=float), side="right")
        r = np.clip(r, 1, self.n)
        return r / (self.n + 1)

    def quantile(self, p):
        """Left-continuous inverse of the empirical step CDF."""
        p = np.asarray(p, dtype=float)
        k = np.clip(np.ceil(p * self.n).astype(np.int64) - 1, 0, self.n - 1)
        return self.sorted[k]

    @property
    def breakpoints(self) -> np.ndarray:
        """Probability levels in ``(0, 1)`` where the quantile function jumps."""
        jumps = np.flatnonzero(np.diff(self.sorted) != 0) + 1
        return jumps / self.n

    def mean(self) -> float:
        return float(self.sorted.mean())

    def summary(self) -> dict:
        q = np.quantile(self.sorted, [0.1, 0.25, 0.5, 0.75, 0.9])
        return {"n": int(self.n), "mean": float(self.sorted.mean()),
                "sd": float(self.sorted.std()), "min": float(self.sorted[0]),
                "max": float(self.sorted[-1]),
                "quantiles": {"0.1": q[0], "0.25": q[1], "0.5": q[2], "0.75": q[3], "0.9": q[4]}}


@dataclass(frozen=True)
class CopulaModel:
    """Fitted Gumbel dependence between treatment and degree.

    Attributes
    ----------
    theta : float
        Gumbel parameter, ``>= 1``.
    x_marginal, d_marginal : EmpiricalMarginal or None
        Marginal distributions of treatment and degree.
    fit_n : int
        Number of pairs used in the fit.
    """

    theta: float
    x_marginal: Optional[EmpiricalMarginal] = None
    d_marginal: Optional[EmpiricalMarginal] = None
    fit_n: int = 0
    family: str = "gumbel"

    def __post_init__(self):
        _check_theta(self.theta)

    def with_marginals(self, x_sample=None, d_sample=None) -> "CopulaModel":
        """Replace one or both marginals by the empirical law of a sample."""
        return replace(
            self,
            x_marginal=self.x_marginal if x_sample is None else EmpiricalMarginal(x_sample),
            d_marginal=self.d_marginal if d_sample is None else EmpiricalMarginal(d_sample),
        )

    def to_json(self) -> dict:
        out = {"family": self.family, "theta": float(self.theta), "fit_n": int(self.fit_n)}
        out["marginals"] = {
            "x": self.x_marginal.summary() if self.x_marginal is not None else None,
            "d": self.d_marginal.summary() if self.d_marginal is not None else None,
        }
        return out

    @classmethod
    def from_json(cls, d: dict) -> "CopulaModel":
        if d.get("family", "gumbel") != "gumbel":
            raise ValueError(f"unsupported copula family {d.get('family')!r}")
        return cls(theta=float(d["theta"]), fit_n=int(d.get("fit_n", 0)))


def fit_gumbel(x, d, bounds=(1.0, 50.0), xatol: float = 1e-6) -> CopulaModel:
    """Fit the Gumbel parameter by pseudo maximum likelihood.

    Both margins are replaced by scaled ranks ``rank/(n+1)`` (average ranks
    for ties) and the copula log-likelihood is maximised over ``theta`` in
    ``bounds`` with a bounded scalar search.

    Raises
    ------
    DegenerateDesignError
        Fewer than ten pairs or a constant margin.
    FitError
        The optimum lies on the upper end of the search bracket.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if x.shape != d.shape or x.ndim != 1:
        raise ValueError("x and d must be 1-d of equal length")
    if x.size < 10:
        raise DegenerateDesignError("need at least 10 pairs to fit a copula")
    if np.ptp(x) == 0 or np.ptp(d) == 0:
        raise DegenerateDesignError("a margin is constant; ranks carry no information")
    n = x.size
    u = stats.rankdata(x) / (n + 1)
    v = stats.rankdata(d) / (n + 1)

    def nll(theta):
        return -float(np.sum(gumbel_logpdf(u, v, theta)))

    res = optimize.minimize_scalar(nll, bounds=bounds, method="bounded",
                                   options={"xatol": xatol})
    theta = float(res.x)
    if theta >= bounds[1] - 10 * xatol:
        raise FitError(f"theta estimate hit the upper search bound {bounds[1]}")
    return CopulaModel(theta=max(theta, 1.0), x_marginal=EmpiricalMarginal(x),
                       d_marginal=EmpiricalMarginal(d), fit_n=n)


def _stieltjes(u: np.ndarray, grid: np.ndarray, quantile, theta: float) -> np.ndarray:
    mids = 0.5 * (grid[1:] + grid[:-1])
    q = quantile(mids)
    h = gumbel_h(u[:, None], grid[None, :], theta)
    return np.diff(h, axis=1) @ q


def expected_degree_given_x(model: CopulaModel, x, quadrature_nodes: int = 64,
                            tol: float = 1e-4, max_nodes: int = 2 ** 14):
    """Conditional mean degree ``E(d | x)`` implied by the copula.

    Computes ``int_0^1 F_D^{-1}(v) dh(u_x, v)`` with ``h = dC/du`` and
    ``u_x = F_X(x)``, by a composite midpoint rule in ``v``.  The panel
    edges are a uniform grid plus the jump points of the degree quantile
    function, so step marginals are integrated without discretisation error.
    The grid is doubled until the result moves by less than ``tol``.

    Raises
    ------
    QuadratureError
        If doubling up to ``max_nodes`` panels does not stabilise.
    """
    if model.x_marginal is None or model.d_marginal is None:
        raise ValueError("model needs both marginals attached")
    scalar = np.ndim(x) == 0
    u = np.atleast_1d(model.x_marginal.cdf(x)).astype(float)
    dm = model.d_marginal
    brk = getattr(dm, "breakpoints", np.empty(0))
    k = int(quadrature_nodes)
    prev = None
    while True:
        grid = np.union1d(np.linspace(0.0, 1.0, k + 1), brk)
        cur = _stieltjes(u, grid, dm.quantile, model.theta)
        if prev is not None and np.max(np.abs(cur - prev)) < tol:
            break
        if k >= max_nodes:
            raise QuadratureError(f"conditional mean not stable at {k} panels")
        prev = cur
        k *= 2
    return float(cur[0]) if scalar else cur


def eta_hat_copula(H: Network, x, model: CopulaModel, m: int) -> float:
    """Bias ratio estimate when treatment depends on degree.

    Nodes whose sampled degree has reached the cap ``m`` are assigned an
    unobserved spillover of ``max(E(d | x_i) - d^H_i, 0) * mean(x)``.
    """
    x = np.asarray(x, dtype=float)
    s = spillovers(H, x)
    denom = float(np.mean(s ** 2))
    if denom <= 0:
        raise DegenerateDesignError("sampled spillovers are identically zero")
    d_h = H.row_nnz().astype(float)
    binding = np.flatnonzero(d_h >= m)
    missing = np.zeros(x.size)
    if binding.size:
        ed = np.atleast_1d(expected_degree_given_x(model, x[binding]))
        missing[binding] = np.maximum(ed - d_h[binding], 0.0) * x.mean()
    return float(np.mean(s * missing) / denom)
