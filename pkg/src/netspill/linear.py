"""Naive and bias-corrected estimators for the linear spillover model.

The model is ``y_i = beta * sum_j g_ij x_j + eps_i`` with the true network
``G = H + B`` only partly observed.  Regressing ``y`` on the sampled
spillovers ``s = H x`` estimates ``(1 + eta) * beta`` where

    eta = mean(s * B x) / mean(s ** 2),

so every corrected estimator divides the naive slope by ``1 + eta`` for
some known or estimated ``eta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DegenerateDesignError, MissingStatsError, SingularCorrectionError
from .network import DegreeStats, Network, in_degrees, spillovers
from .placement import place_missing_links

__all__ = [
    "EstimateResult",
    "RobustnessReport",
    "ols_spillover",
    "apply_eta",
    "correct_known_eta",
    "realized_eta",
    "eta_hat_independent",
    "eta_hat_conditional",
    "eta_hat_simulated",
    "eta_fixed_choice_analytic",
    "dummy_estimator",
    "robustness",
]

METHODS = ("ols", "corrected_known", "corrected_indep", "corrected_cond",
           "corrected_copula", "corrected_sim", "dummy")

ETA_GUARD = 1e-6


@dataclass(frozen=True)
class EstimateResult:
    """Point estimate with optional eta, standard error and interval.

    Attributes
    ----------
    beta_hat : float
    method : str
        One of ``ols``, ``corrected_known``, ``corrected_indep``,
        ``corrected_cond``, ``corrected_copula``, ``corrected_sim``, ``dummy``.
    eta_used : float or None
    se : float or None
    ci : tuple or None
    diagnostics : dict
    """

    beta_hat: float
    method: str = "ols"
    eta_used: Optional[float] = None
    se: Optional[float] = None
    ci: Optional[tuple] = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")
        if self.se is not None and self.se < 0:
            raise ValueError("se must be >= 0")

    def with_se(self, se: float, z: float = 1.959963984540054) -> "EstimateResult":
        """Attach a standard error and the matching normal interval."""
        return replace(self, se=float(se), ci=(self.beta_hat - z * se, self.beta_hat + z * se))

    def to_dict(self) -> dict:
        return {
            "beta_hat": self.beta_hat,
            "method": self.method,
            "eta_used": self.eta_used,
            "se": self.se,
            "ci": list(self.ci) if self.ci is not None else None,
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class RobustnessReport:
    """Break-even dependence and degree for a sign/size conclusion.

    Attributes
    ----------
    threshold_tau : float
        Effect size the conclusion must exceed.
    eta_star : float
        Largest ``eta`` for which the corrected estimate still exceeds ``tau``.
    degree_star : float or None
        Matching bound on the mean missing degree of the bad set.
    bounds : tuple or None
        ``beta`` interval implied by an assumed range of ``eta``.
    """

    threshold_tau: float
    eta_star: float
    degree_star: Optional[float] = None
    bounds: Optional[tuple] = None

    def to_dict(self) -> dict:
        return {"threshold_tau": self.threshold_tau, "eta_star": self.eta_star,
                "degree_star": self.degree_star,
                "bounds": list(self.bounds) if self.bounds is not None else None}


def _denominator(s: np.ndarray) -> float:
    denom = float(np.mean(s ** 2))
    if not denom > 0:
        raise DegenerateDesignError("sampled spillovers are identically zero")
    return denom


def _residualize(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    return a - q @ (q.T @ a)


def ols_spillover(H: Network, x, y, W=None) -> EstimateResult:
    """Regress outcomes on sampled spillovers ``H x`` without intercept.

    With covariates ``W`` (include a column of ones for an intercept), ``s``
    and ``y`` are first projected off the column space of ``W``.

    Raises
    ------
    DegenerateDesignError
        If the (residualised) spillovers are identically zero.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = spillovers(H, x)
    if y.shape != s.shape:
        raise ValueError("y must have one entry per node")
    diag = {"n": int(s.size)}
    if W is not None:
        W = np.asarray(W, dtype=float)
        if W.ndim == 1:
            W = W[:, None]
        q, _ = np.linalg.qr(W)
        s = _residualize(s, q)
        y = _residualize(y, q)
        diag["covariates"] = int(W.shape[1])
    denom = float(np.mean(s ** 2))
    if denom <= 1e-14 * max(1.0, float(np.mean(spillovers(H, x) ** 2))):
        raise DegenerateDesignError("sampled spillovers have no variation after partialling")
    diag["denominator"] = denom
    beta = float(np.mean(s * y) / denom)
    return EstimateResult(beta, "ols", diagnostics=diag)


def apply_eta(ols: EstimateResult, eta: float, method: str) -> EstimateResult:
    """Divide a naive estimate by ``1 + eta``.

    Raises
    ------
    SingularCorrectionError
        If ``|1 + eta| <= 1e-6``.
    """
    eta = float(eta)
    if not np.isfinite(eta) or abs(1.0 + eta) <= ETA_GUARD:
        raise SingularCorrectionError(f"correction factor 1 + eta is singular (eta={eta})")
    diag = dict(ols.diagnostics)
    diag["beta_ols"] = ols.beta_hat
    return EstimateResult(ols.beta_hat / (1.0 + eta), method, eta_used=eta, diagnostics=diag)


def correct_known_eta(ols: EstimateResult, eta: float) -> EstimateResult:
    """Corrected estimate for a known dependence ratio ``eta``."""
    return apply_eta(ols, eta, "corrected_known")


def realized_eta(H: Network, B: Network, x) -> float:
    """Realised ratio ``mean(Hx * Bx) / mean((Hx)^2)`` given the true ``B``."""
    s = spillovers(H, x)
    return float(np.mean(s * spillovers(B, x)) / _denominator(s))


def _require(stats: DegreeStats) -> tuple:
    if stats.mean_sampled_bad is None or stats.mean_missing_bad is None:
        raise MissingStatsError("degree means over the bad set are absent")
    return stats.mean_sampled_bad, stats.mean_missing_bad


def eta_hat_independent(H: Network, x, stats: DegreeStats) -> float:
    """Plug-in ``eta`` when missing links are independent of sampled ones.

    ``eta_hat = (N^B / N) * d_H * d_B * mean(x)^2 / mean((Hx)^2)`` with
    ``d_H`` and ``d_B`` the mean sampled and missing degrees over the bad set.
    Returns 0 when the bad set is empty.
    """
    x = np.asarray(x, dtype=float)
    denom = _denominator(spillovers(H, x))
    if stats.n_bad == 0:
        return 0.0
    dh, db = _require(stats)
    return stats.share_bad * dh * db * x.mean() ** 2 / denom


def eta_hat_conditional(H: Network, x, stats: DegreeStats, bad_set=None,
                        diagnostics: Optional[dict] = None) -> float:
    """Plug-in ``eta`` when missing degree depends on sampled degree.

    The numerator is ``(1/N) sum_{i in bad} d^H_i d_B(d^H_i) mean(x)^2``.
    With ``bad_set`` given, each bad node looks up its bucket and falls back
    to the nearest bucket when its own is absent; otherwise the sum is
    taken over the bucket table using its counts.

    Raises
    ------
    MissingStatsError
        If the table is empty while the bad set is not.
    """
    x = np.asarray(x, dtype=float)
    denom = _denominator(spillovers(H, x))
    if stats.n_bad == 0:
        return 0.0
    table = stats.conditional
    if not table:
        raise MissingStatsError("conditional missing-degree table is empty")
    keys = np.array(sorted(table))
    if bad_set is None:
        counts = [table[k][1] for k in keys]
        if any(c is None for c in counts):
            raise MissingStatsError("bucket counts needed when the bad set is unknown")
        total = float(sum(k * table[k][0] * table[k][1] for k in keys))
    else:
        d_h = in_degrees(H)[np.asarray(bad_set)]
        fallbacks = 0
        total = 0.0
        for d in d_h:
            key = stats.bucket(d)
            if key not in table:
                key = float(keys[np.argmin(np.abs(keys - key))])
                fallbacks += 1
            total += d * table[key][0]
        if diagnostics is not None:
            diagnostics["bucket_fallbacks"] = fallbacks
    return total / stats.n * x.mean() ** 2 / denom


def eta_hat_simulated(H: Network, x, d_bar_B: float, n_bad: int, rng, draws: int = 20,
                      rows=None) -> float:
    """Monte Carlo ``eta`` averaging the realised ratio over random placements.

    Each draw places ``round(n_bad * d_bar_B)`` unit links uniformly over the
    empty cells of the eligible rows.
    """
    s = spillovers(H, x)
    denom = _denominator(s)
    count = int(round(n_bad * d_bar_B))
    vals = []
    for _ in range(draws):
        B = place_missing_links(H, count, rng, rows=rows)
        vals.append(np.mean(s * spillovers(B, x)) / denom)
    return float(np.mean(vals))


def eta_fixed_choice_analytic(degree_law, m: int, H: Network, x, treat_mean=None) -> float:
    """Closed-form ``eta`` numerator under binary fixed-choice sampling.

    Every node with true degree ``d > m`` reports ``m`` links and misses
    ``d - m``, so the numerator is ``sum_d P(d) 1(d > m) m (d - m) E(x)^2``.
    It is divided by the realised ``mean((Hx)^2)``.
    """
    x = np.asarray(x, dtype=float)
    ex = x.mean() if treat_mean is None else float(treat_mean)
    vals, probs = degree_law.pmf()
    over = vals > m
    num = float(np.sum(probs[over] * m * (vals[over] - m))) * ex ** 2
    return num / _denominator(spillovers(H, x))


def _prob_positive_independent(H: Network, stats: DegreeStats, p: float) -> float:
    d_h = in_degrees(H)
    none_h = (1 - p) ** d_h
    if stats.n_bad == 0:
        return float(1 - none_h.mean())
    _, db = _require(stats)
    share = stats.share_bad
    return float(1 - np.mean(none_h * (share * (1 - p) ** db + (1 - share))))


def dummy_estimator(H: Network, x, y, stats: DegreeStats, p_true_pos: Optional[float] = None,
                    treat_p: Optional[float] = None) -> EstimateResult:
    """Rescaled difference in means for an "any treated neighbour" dummy.

    The naive estimate ``mean(y | Hx > 0) - mean(y | Hx = 0)`` is multiplied
    by

        [(E d^H + E d^B) / P(Gx > 0)]
        / [E d^H / P(Hx > 0) + E(d^B | Hx > 0) - E(d^B | Hx = 0)].

    Parameters
    ----------
    H : Network
    x, y : array_like
    stats : DegreeStats
        Must carry ``treated_split``.
    p_true_pos : float, optional
        ``P(Gx > 0)``.  When absent it is computed as
        ``1 - E[(1 - p)^(d^H + d^B)]`` with bad-set membership drawn at rate
        ``N^B / N``; the choice is recorded in ``diagnostics``.
    treat_p : float, optional
        Treatment probability for that default; the sample mean of ``x`` if
        omitted.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = spillovers(H, x)
    pos = s > 0
    if pos.all() or not pos.any():
        raise DegenerateDesignError("both dummy groups must be nonempty")
    gamma_ols = float(y[pos].mean() - y[~pos].mean())
    diag = {"gamma_ols": gamma_ols}
    if stats.treated_split is None:
        raise MissingStatsError("treated_split statistics are required")
    db_pos, db_zero = stats.treated_split
    db_pos = 0.0 if db_pos is None else db_pos
    db_zero = 0.0 if db_zero is None else db_zero
    e_dh = float(in_degrees(H).mean())
    e_db = 0.0 if stats.n_bad == 0 else stats.share_bad * _require(stats)[1]
    p_h = float(pos.mean())
    if p_true_pos is None:
        p = float(x.mean()) if treat_p is None else float(treat_p)
        p_true_pos = _prob_positive_independent(H, stats, p)
        diag["p_true_pos_method"] = "independent: 1 - E[(1-p)^(d_H + d_B)]"
    else:
        diag["p_true_pos_method"] = "supplied"
    if not 0 < p_true_pos <= 1:
        raise DegenerateDesignError(f"P(Gx > 0) must lie in (0, 1], got {p_true_pos}")
    lower = e_dh / p_h + db_pos - db_zero
    if abs(lower) <= ETA_GUARD:
        raise SingularCorrectionError("dummy rescaling denominator is zero")
    factor = ((e_dh + e_db) / p_true_pos) / lower
    diag.update(p_true_pos=float(p_true_pos), p_sampled_pos=p_h, factor=float(factor))
    return EstimateResult(factor * gamma_ols, "dummy", diagnostics=diag)


def robustness(ols: EstimateResult, tau: float, H: Optional[Network] = None, x=None,
               stats: Optional[DegreeStats] = None, eta_range: Optional[tuple] = None
               ) -> RobustnessReport:
    """How much sampling dependence a conclusion ``beta > tau`` can absorb.

    ``eta_star = (beta_ols - tau) / tau``.  With ``H``, ``x`` and ``stats`` the
    matching mean missing degree is
    ``mean((Hx)^2) / ((N^B/N) mean(x)^2 d_H) * eta_star``.  With
    ``eta_range = (eta_min, eta_max)`` the implied interval for ``beta`` is
    returned, sorted.
    """
    if tau == 0:
        raise ZeroDivisionError("tau must be nonzero")
    b = ols.beta_hat
    eta_star = (b - tau) / tau
    degree_star = None
    if stats is not None and H is not None and x is not None:
        x = np.asarray(x, dtype=float)
        denom = float(np.mean(spillovers(H, x) ** 2))
        dh = stats.mean_sampled_bad
        scale = stats.share_bad * x.mean() ** 2 * (dh if dh is not None else 0.0)
        if scale == 0:
            raise ZeroDivisionError("share of bad nodes, mean(x) or d_H is zero")
        degree_star = denom / scale * eta_star
    bounds = None
    if eta_range is not None:
        lo, hi = (float(v) for v in eta_range)
        for e in (lo, hi):
            if abs(1 + e) <= ETA_GUARD:
                raise ZeroDivisionError(f"1 + eta is zero at eta={e}")
        a, c = b / (1 + hi), b / (1 + lo)
        bounds = (min(a, c), max(a, c))
    return RobustnessReport(float(tau), float(eta_star), degree_star, bounds)
