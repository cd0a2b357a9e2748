"""Declarative Monte Carlo experiments and their table output.

An experiment is a JSON object.  Named designs (``case1`` .. ``case5``,
``sar_case1``, ``sar_case2``, ``copula_case``) expand to explicit configs
that any user could also write by hand; user keys override the expansion.

Schema (all keys optional when a design tag is given)::

    {
      "design": "case1" | ... | "custom",
      "n": 1000, "reps": 1000, "seed": 12345,
      "network": {"kind": "random", "degree": {"law": "uniform", "lo": 1, "hi": 15},
                  "weights": "binary", "scale": 1.0}
               | {"kind": "group", "groups": [[20, 25], [10, 20], [20, 15]], "k": 1,
                  "deg_lo": {"const": [...], "slope": [...]},
                  "deg_hi": {"const": [...], "slope": [...]}, "weights": "binary"}
               | {"kind": "lognormal", "mu": 1.0, "sigma2": 15.0},
      "treatment": {"kind": "bernoulli", "p": 0.3}
                 | {"kind": "normal", "mean": 0.0, "sd": 1.0}
                 | {"kind": "copula", "mean": 5.0, "sd": 1.0, "theta": 10.0},
      "model": {"kind": "linear", "beta": 0.8, "noise_sd": 1.0}
             | {"kind": "sar", "lambda": 0.3, "beta": 0.8, "noise_sd": 1.0,
                "instruments_k": 2},
      "sampling": {"rule": "fixed_choice", "m": 5, ...},
      "sweep": {"param": "sampling.m", "values": [3, 4, 5]},
      "estimators": ["ols", "eta", "eta_hat"],
      "eta_hat": "independent" | "conditional" | "copula" | "simulated",
      "histogram_bins": 40,
      "output_dir": "out"
    }

Group degree bounds for group type ``t`` are ``const[t] + slope[t] * k``.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .copula import eta_hat_copula, fit_gumbel
from .dgp import (LinearParams, SarParams, gen_group_network, gen_network,
                  gen_network_lognormal, gen_treatment_bernoulli, gen_treatment_copula,
                  group_assignment, law_from_dict, simulate_linear, simulate_sar)
from .errors import NetspillError
from .linear import (apply_eta, eta_fixed_choice_analytic, eta_hat_conditional,
                     eta_hat_independent, eta_hat_simulated, ols_spillover, realized_eta)
from .network import decompose, degree_stats
from .sampling import FixedChoice, apply_rule, candidate_bad_rows, rule_from_dict
from .sar import (build_instruments, build_instruments_corrected, debias_tsls,
                  eta_matrix_feasible, eta_matrix_oracle, expected_missing_degrees, tsls)

__all__ = [
    "DESIGNS",
    "ExperimentConfig",
    "CellResult",
    "ExperimentResult",
    "expand_design",
    "run_experiment",
    "run_replication",
    "emit_tables",
]

LINEAR_ESTIMATORS = ("ols", "eta", "eta_hat", "eta_hat_independent", "eta_hat_conditional",
                     "eta_hat_copula", "eta_hat_simulated", "eta_analytic")
SAR_ESTIMATORS = ("tsls_naive", "tsls_oracle", "tsls_feasible", "tsls_true")

_GROUPS = [[20, 25], [10, 20], [20, 15]]
_LINEAR = {"kind": "linear", "beta": 0.8, "noise_sd": 1.0}
_SAR = {"kind": "sar", "lambda": 0.3, "beta": 0.8, "noise_sd": 1.0, "instruments_k": 2}
_BERNOULLI = {"kind": "bernoulli", "p": 0.3}


def _base(**kw) -> dict:
    cfg = {"n": 1000, "reps": 1000, "seed": 12345, "treatment": dict(_BERNOULLI),
           "model": dict(_LINEAR), "estimators": ["ols", "eta", "eta_hat"],
           "eta_hat": "independent", "histogram_bins": 40, "output_dir": "out"}
    cfg.update(kw)
    return cfg


def _random_net(lo, hi, weights="binary", scale=1.0) -> dict:
    return {"kind": "random", "degree": {"law": "uniform", "lo": lo, "hi": hi},
            "weights": weights, "scale": scale}


def _group_net(lo_const, lo_slope, hi_const, hi_slope) -> dict:
    return {"kind": "group", "groups": copy.deepcopy(_GROUPS), "k": 1, "weights": "binary",
            "deg_lo": {"const": lo_const, "slope": lo_slope},
            "deg_hi": {"const": hi_const, "slope": hi_slope}}


def _case1():
    return _base(network=_random_net(1, 15),
                 sampling={"rule": "fixed_choice", "m": 5, "order": "uniform"},
                 sweep={"param": "sampling.m", "values": list(range(3, 11))})


def _case2():
    return _base(network=_group_net([20, 15, 10], [-1, -1, -1], [25, 20, 15], [-1, -1, -1]),
                 sampling={"rule": "group_membership"},
                 sweep={"param": "network.k", "values": [1, 2, 3, 4, 5]})


def _case3():
    return _base(network={"kind": "lognormal", "mu": 1.0, "sigma2": 15.0},
                 sampling={"rule": "weight_threshold", "tau": 0.1},
                 sweep={"param": "sampling.tau",
                        "values": [0.2, 0.175, 0.15, 0.12, 0.1, 0.075, 0.05, 0.025]})


def _case4():
    return _base(network=_random_net(1, 15, "inverse_degree"),
                 sampling={"rule": "fixed_choice", "m": 5, "order": "uniform"},
                 sweep={"param": "sampling.m", "values": list(range(3, 11))},
                 eta_hat="conditional")


def _case5():
    return _base(network=_group_net([20, 15, 10], [-3, -2, -1], [25, 20, 15], [-3, -2, -1]),
                 sampling={"rule": "group_membership"},
                 sweep={"param": "network.k", "values": [1, 2, 3, 4, 5]},
                 eta_hat="conditional")


def _sar(sampling):
    return _base(network=_random_net(0, 10, scale=0.1), model=dict(_SAR), sampling=sampling,
                 sweep={"param": "sampling.m", "values": [sampling["m"]]},
                 estimators=list(SAR_ESTIMATORS))


def _copula_case():
    return _base(network=_random_net(0, 10),
                 treatment={"kind": "copula", "mean": 5.0, "sd": 1.0, "theta": 10.0},
                 sampling={"rule": "fixed_choice", "m": 5, "order": "uniform"},
                 sweep={"param": "sampling.m", "values": [5]},
                 estimators=["ols", "eta", "eta_hat", "eta_hat_independent"],
                 eta_hat="copula")


DESIGNS = {
    "case1": _case1,
    "case2": _case2,
    "case3": _case3,
    "case4": _case4,
    "case5": _case5,
    "sar_case1": lambda: _sar({"rule": "fixed_choice", "m": 5, "order": "uniform"}),
    "sar_case2": lambda: _sar({"rule": "random_superset", "m": 10, "weight": 0.1}),
    "copula_case": _copula_case,
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def expand_design(raw: dict) -> dict:
    """Expand a design tag into an explicit config, applying overrides."""
    design = raw.get("design", "custom")
    if design == "custom":
        return _merge(_base(), raw)
    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}; choose from {sorted(DESIGNS)} or custom")
    return _merge(DESIGNS[design](), raw)


def _set_path(d: dict, path: str, value) -> None:
    keys = path.split(".")
    for k in keys[:-1]:
        if not isinstance(d.get(k), dict):
            raise ValueError(f"sweep path {path!r} does not name a config field")
        d = d[k]
    d[keys[-1]] = value


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully expanded experiment declaration.

    Attributes
    ----------
    data : dict
        Explicit config (design tags already expanded).
    """

    data: dict

    def __post_init__(self):
        s = self.data
        missing = [k for k in ("network", "treatment", "model", "sampling", "sweep") if k not in s]
        if missing:
            raise ValueError(f"config lacks {missing}")
        if int(s["reps"]) < 1:
            raise ValueError("reps must be >= 1")
        if int(s["n"]) < 2:
            raise ValueError("n must be >= 2")
        sweep = s.get("sweep") or {}
        if not sweep.get("values"):
            raise ValueError("sweep must list at least one value")
        ests = s.get("estimators") or []
        if not ests:
            raise ValueError("at least one estimator is required")
        allowed = SAR_ESTIMATORS if s["model"]["kind"] == "sar" else LINEAR_ESTIMATORS
        bad = [e for e in ests if e not in allowed]
        if bad:
            raise ValueError(f"estimators {bad} not available for a {s['model']['kind']} model")
        for v in sweep["values"]:
            _set_path(copy.deepcopy(s), sweep["param"], v)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        return cls(expand_design(raw))

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @property
    def design(self) -> str:
        return self.data.get("design", "custom")

    @property
    def n(self) -> int:
        return int(self.data["n"])

    @property
    def reps(self) -> int:
        return int(self.data["reps"])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def sweep_param(self) -> str:
        return self.data["sweep"]["param"]

    @property
    def sweep_values(self) -> list:
        return list(self.data["sweep"]["values"])

    @property
    def estimators(self) -> list:
        return list(self.data["estimators"])

    def output_names(self) -> list:
        """Column names produced per replication."""
        if self.data["model"]["kind"] == "sar":
            return [f"{e}.{p}" for e in self.estimators for p in ("lambda", "beta")]
        return self.estimators

    def cell(self, value) -> dict:
        """The config with the sweep parameter set to ``value``."""
        c = copy.deepcopy(self.data)
        _set_path(c, self.sweep_param, value)
        return c

    def content_hash(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig(_merge(self.data, kw))


def _affine(bounds: dict, k: float, n_types: int) -> np.ndarray:
    const = np.broadcast_to(np.asarray(bounds["const"], dtype=float), (n_types,))
    slope = np.broadcast_to(np.asarray(bounds.get("slope", 0.0), dtype=float), (n_types,))
    return np.rint(const + slope * k).astype(int)


def _network(cell: dict, n: int, rng):
    net = cell["network"]
    kind = net["kind"]
    if kind == "random":
        G = gen_network(n, law_from_dict(net["degree"]), net.get("weights", "binary"), rng)
        scale = float(net.get("scale", 1.0))
        return (G.scaled(scale) if scale != 1.0 else G), None
    if kind == "group":
        layout = [tuple(g) for g in net["groups"]]
        groups = group_assignment(layout)
        if groups.size != n:
            raise ValueError(f"groups hold {groups.size} nodes but n = {n}")
        types = np.repeat(np.arange(len(layout)), [int(c) for c, _ in layout])
        k = float(net.get("k", 0))
        lo = _affine(net["deg_lo"], k, len(layout))[types]
        hi = _affine(net["deg_hi"], k, len(layout))[types]
        return gen_group_network(groups, lo, hi, net.get("weights", "binary"), rng), groups
    if kind == "lognormal":
        return gen_network_lognormal(n, float(net.get("mu", 1.0)),
                                     float(net.get("sigma2", 15.0)), rng), None
    raise ValueError(f"unknown network kind {kind!r}")


def _treatment(cell: dict, G, rng) -> np.ndarray:
    t = cell["treatment"]
    kind = t["kind"]
    if kind == "bernoulli":
        return gen_treatment_bernoulli(G.n, float(t["p"]), rng)
    if kind == "normal":
        return float(t.get("mean", 0.0)) + float(t.get("sd", 1.0)) * rng.standard_normal(G.n)
    if kind == "copula":
        return gen_treatment_copula(G.row_nnz(), float(t["mean"]), float(t["sd"]),
                                    float(t["theta"]), rng)
    raise ValueError(f"unknown treatment kind {kind!r}")


def _eta_hat(method: str, cell: dict, G, H, dec, x, rule, rng) -> float:
    if method == "independent":
        return eta_hat_independent(H, x, degree_stats(dec))
    if method == "conditional":
        stats = degree_stats(dec, conditional=True, bin_width=cell.get("bin_width"))
        return eta_hat_conditional(H, x, stats)
    if method == "simulated":
        stats = degree_stats(dec)
        if stats.n_bad == 0:
            return 0.0
        rows = candidate_bad_rows(rule, H)
        return eta_hat_simulated(H, x, stats.mean_missing_bad, stats.n_bad, rng, rows=rows)
    if method == "copula":
        if not isinstance(rule, FixedChoice):
            raise ValueError("the copula correction needs a fixed-choice rule")
        d_h = H.row_nnz()
        full = d_h < rule.m
        model = fit_gumbel(x[full], d_h[full])
        # the degree marginal is treated as known, so the true degrees stand in for it
        model = model.with_marginals(x_sample=x, d_sample=G.row_nnz())
        return eta_hat_copula(H, x, model, rule.m)
    raise ValueError(f"unknown eta_hat method {method!r}")


def _linear_estimators(cell, G, H, dec, x, y, rule, rng, out: dict, errors: dict):
    ests = cell["estimators"]
    try:
        ols = ols_spillover(H, x, y)
    except NetspillError as exc:
        for e in ests:
            errors[e] = type(exc).__name__
        return
    for e in ests:
        try:
            if e == "ols":
                out[e] = ols.beta_hat
                continue
            if e == "eta":
                eta = realized_eta(H, dec.missing, x)
            elif e == "eta_hat":
                eta = _eta_hat(cell["eta_hat"], cell, G, H, dec, x, rule, rng)
            elif e == "eta_analytic":
                if not isinstance(rule, FixedChoice) or cell["network"]["kind"] != "random":
                    raise ValueError("eta_analytic needs a random network with fixed choice")
                law = law_from_dict(cell["network"]["degree"])
                eta = eta_fixed_choice_analytic(law, rule.m, H, x)
            else:
                eta = _eta_hat(e[len("eta_hat_"):], cell, G, H, dec, x, rule, rng)
            out[e] = apply_eta(ols, eta, "corrected_sim").beta_hat
        except (NetspillError, ValueError, ZeroDivisionError) as exc:
            errors[e] = type(exc).__name__


def _sar_estimators(cell, G, H, dec, x, y, rule, out: dict, errors: dict):
    k = int(cell["model"].get("instruments_k", 2))
    ests = cell["estimators"]
    fitted = {}

    def corrected():
        if "corr" not in fitted:
            stats = degree_stats(dec)
            rows = candidate_bad_rows(rule, H)
            cand = None if rows is None else np.flatnonzero(rows)
            e = expected_missing_degrees(stats, cand)
            fitted["corr"] = (tsls(H, x, y, build_instruments_corrected(H, x, e, k)), e)
        return fitted["corr"]

    for name in ests:
        try:
            if name == "tsls_naive":
                est = tsls(H, x, y, build_instruments(H, x, k))
            elif name == "tsls_true":
                est = tsls(G, x, y, build_instruments(G, x, k))
            elif name == "tsls_oracle":
                base, _ = corrected()
                est = debias_tsls(base, eta_matrix_oracle(base, dec.missing, y), "oracle")
            else:
                base, e = corrected()
                est = debias_tsls(base, eta_matrix_feasible(base, H, e, y), "feasible")
            out[f"{name}.lambda"] = est.lambda_hat
            out[f"{name}.beta"] = est.beta_hat
        except (NetspillError, ValueError) as exc:
            errors[f"{name}.lambda"] = errors[f"{name}.beta"] = type(exc).__name__


def run_replication(cell: dict, n: int, seed_seq) -> tuple:
    """One draw of the data-generating process and every requested estimator.

    Returns ``(values, errors)`` where ``values`` maps output names to
    floats and ``errors`` maps the failed outputs to an exception name.
    """
    rng = np.random.default_rng(seed_seq)
    G, groups = _network(cell, n, rng)
    x = _treatment(cell, G, rng)
    model = cell["model"]
    if model["kind"] == "linear":
        y = simulate_linear(G, x, LinearParams(float(model["beta"]),
                                               float(model["noise_sd"])), rng)
    elif model["kind"] == "sar":
        y = simulate_sar(G, x, SarParams(float(model["lambda"]), float(model["beta"]),
                                         float(model["noise_sd"])), rng)
    else:
        raise ValueError(f"unknown model kind {model['kind']!r}")
    rule = rule_from_dict(cell["sampling"], groups=groups)
    H = apply_rule(rule, G, rng)
    dec = decompose(G, H)
    out, errors = {}, {}
    if model["kind"] == "linear":
        _linear_estimators(cell, G, H, dec, x, y, rule, rng, out, errors)
    else:
        _sar_estimators(cell, G, H, dec, x, y, rule, out, errors)
    return out, errors


def _rep_seed(seed: int, cell_index: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(cell_index, rep))


def _run_block(args) -> tuple:
    cell, n, seed, cell_index, reps, names = args
    vals = np.full((len(reps), len(names)), np.nan)
    errs = []
    for row, rep in enumerate(reps):
        try:
            out, errors = run_replication(cell, n, _rep_seed(seed, cell_index, rep))
        except (NetspillError, ValueError) as exc:
            out, errors = {}, {nm: type(exc).__name__ for nm in names}
        for j, nm in enumerate(names):
            if nm in out:
                vals[row, j] = out[nm]
        errs.extend((rep, nm, why) for nm, why in errors.items())
    return vals, errs


@dataclass
class CellResult:
    """All replications of one sweep value.

    Attributes
    ----------
    value : sweep value
    names : list of str
        Output columns.
    values : ndarray of shape (reps, len(names))
        Per-replication estimates; ``nan`` marks a failed replication.
    errors : list of (rep, name, exception name)
    """

    value: object
    names: list
    values: np.ndarray
    errors: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def mean(self, name: str) -> float:
        c = self.column(name)
        c = c[np.isfinite(c)]
        return float(c.mean()) if c.size else float("nan")

    def sd(self, name: str) -> float:
        c = self.column(name)
        c = c[np.isfinite(c)]
        return float(c.std(ddof=1)) if c.size > 1 else float("nan")

    def mc_se(self, name: str) -> float:
        c = self.column(name)
        k = int(np.isfinite(c).sum())
        return self.sd(name) / np.sqrt(k) if k > 1 else float("nan")

    def failures(self, name: str) -> int:
        return int((~np.isfinite(self.column(name))).sum())

    def histogram(self, bins: int = 40):
        """Counts per output over ``bins`` equal-width bins spanning the pooled range."""
        finite = self.values[np.isfinite(self.values)]
        if finite.size == 0:
            lo, hi = 0.0, 1.0
        else:
            lo, hi = float(finite.min()), float(finite.max())
            if hi <= lo:
                lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, bins + 1)
        counts = {}
        for j, nm in enumerate(self.names):
            c = self.values[:, j]
            counts[nm] = np.histogram(c[np.isfinite(c)], edges)[0]
        return edges, counts


@dataclass
class ExperimentResult:
    """Output of ``run_experiment``."""

    config: ExperimentConfig
    cells: list

    def cell(self, value) -> CellResult:
        for c in self.cells:
            if c.value == value:
                return c
        raise KeyError(value)

    @property
    def metadata(self) -> dict:
        return {"config": self.config.data, "content_hash": self.config.content_hash(),
                "seed": self.config.seed, "version": __version__,
                "failed_replications": {str(c.value): len({r for r, _, _ in c.errors})
                                        for c in self.cells}}

    def summary(self) -> list:
        """One dict per cell with mean, MC sd and failure count per output."""
        rows = []
        for c in self.cells:
            row = {"value": c.value}
            for nm in c.names:
                row[nm] = {"mean": c.mean(nm), "sd": c.sd(nm), "n_failed": c.failures(nm)}
            rows.append(row)
        return rows


def run_experiment(cfg: ExperimentConfig, threads: int = 1, progress=None) -> ExperimentResult:
    """Run every replication of every sweep cell.

    Replication ``r`` of cell ``c`` draws from
    ``SeedSequence(seed, spawn_key=(c, r))``, so results do not depend on
    ``threads`` or on the order in which work completes.
    """
    names = cfg.output_names()
    jobs = []
    chunk = max(1, cfg.reps // max(1, 4 * threads)) if threads > 1 else cfg.reps
    for ci, value in enumerate(cfg.sweep_values):
        cell = cfg.cell(value)
        for start in range(0, cfg.reps, chunk):
            reps = list(range(start, min(cfg.reps, start + chunk)))
            jobs.append((ci, (cell, cfg.n, cfg.seed, ci, reps, names)))
    buffers = [np.full((cfg.reps, len(names)), np.nan) for _ in cfg.sweep_values]
    errors = [[] for _ in cfg.sweep_values]

    def collect(job, result):
        ci, args = job
        vals, errs = result
        buffers[ci][args[4][0]:args[4][-1] + 1] = vals
        errors[ci].extend(errs)
        if progress is not None:
            progress(ci, len(args[4]))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for job, result in zip(jobs, pool.map(_run_block, [a for _, a in jobs])):
                collect(job, result)
    else:
        for job in jobs:
            collect(job, _run_block(job[1]))
    cells = [CellResult(v, list(names), buffers[ci], sorted(errors[ci]))
             for ci, v in enumerate(cfg.sweep_values)]
    return ExperimentResult(cfg, cells)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "nan" if not np.isfinite(v) else f"{v:.6f}"


def emit_tables(res: ExperimentResult, out_dir) -> list:
    """Write the table CSV, one histogram CSV per cell and a metadata JSON.

    Returns the written paths.  Formatting is fixed so that reruns with the
    same seed produce byte-identical files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = res.config.design
    param = res.config.sweep_param.split(".")[-1]
    names = res.cells[0].names if res.cells else []
    paths = []
    table = out / f"{stem}_table.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([param] + names + [f"{nm}_sd" for nm in names] + ["n_failed"])
        for c in res.cells:
            failed = len({r for r, _, _ in c.errors})
            w.writerow([c.value] + [_fmt(c.mean(nm)) for nm in names]
                       + [_fmt(c.sd(nm)) for nm in names] + [failed])
    paths.append(table)
    bins = int(res.config.data.get("histogram_bins", 40))
    for c in res.cells:
        edges, counts = c.histogram(bins)
        hist = out / f"{stem}_hist_{param}={c.value}.csv"
        with open(hist, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi"] + names)
            for b in range(bins):
                w.writerow([_fmt(edges[b]), _fmt(edges[b + 1])]
                           + [int(counts[nm][b]) for nm in names])
        paths.append(hist)
    meta = out / f"{stem}_metadata.json"
    meta.write_text(json.dumps(res.metadata, indent=2, sort_keys=True) + "\n")
    paths.append(meta)
    return paths


def load_config(path: Optional[str] = None, design: Optional[str] = None) -> ExperimentConfig:
    """Read a config file, or expand a bare design tag."""
    if path is not None:
        return ExperimentConfig.from_json(path)
    return ExperimentConfig.from_dict({"design": design or "custom"})
