"""Command line entry point.

Exit status is 0 on success, 1 on a usage or input error and 2 on a
numerical failure (singular correction, divergence, degenerate design).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .copula import CopulaModel, eta_hat_copula, fit_gumbel
from .errors import DimensionError, NetspillError
from .experiments import DESIGNS, ExperimentConfig, emit_tables, run_experiment
from .inference import BootstrapConfig, bootstrap_se, sandwich_known_eta
from .io import read_data, read_edges, read_stats
from .linear import (EstimateResult, apply_eta, dummy_estimator, eta_hat_conditional,
                     eta_hat_independent, eta_hat_simulated, ols_spillover, robustness)
from .network import decompose, spillovers
from .sar import (build_instruments, build_instruments_corrected, debias_tsls,
                  eta_matrix_feasible, eta_matrix_oracle, expected_missing_degrees,
                  sar_sandwich_variance, tsls)

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    """Bad command line or inconsistent inputs."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


LINEAR_METHODS = {
    "ols": "ols",
    "corrected-known": "corrected_known",
    "corrected-indep": "corrected_indep",
    "corrected-cond": "corrected_cond",
    "corrected-sim": "corrected_sim",
    "corrected-copula": "corrected_copula",
    "dummy": "dummy",
}


def _add_inputs(p, stats=True):
    p.add_argument("--edges", required=True, help="sampled network edge list (src,dst[,weight])")
    p.add_argument("--data", required=True, help="node data CSV (node,x[,y][,w1,...])")
    p.add_argument("--n", type=int, help="node count (default: from the data file)")
    p.add_argument("--symmetrize", action="store_true", help="treat the edge list as undirected")
    if stats:
        p.add_argument("--stats", help="degree statistics JSON")
    p.add_argument("--cap", type=int,
                   help="reporting cap m; rows at the cap are the candidates for missing links")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="netspill", description="Spillover estimation on sampled networks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, help="random seed (default: config seed or 0)")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for Monte Carlo runs")
    parser.add_argument("--out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mc", help="run a Monte Carlo experiment")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="experiment JSON")
    src.add_argument("--design", choices=sorted(DESIGNS), help="named design with defaults")
    p.add_argument("--reps", type=int, help="override the replication count")
    p.add_argument("--nodes", type=int, help="override the network size")

    p = sub.add_parser("estimate", help="estimate the spillover effect from data files")
    _add_inputs(p)
    p.add_argument("--model", choices=("linear", "sar"), default="linear")
    p.add_argument("--method", choices=sorted(LINEAR_METHODS), default="ols",
                   help="linear-model estimator")
    p.add_argument("--eta", type=float, help="known eta for corrected-known")
    p.add_argument("--se", choices=("none", "sandwich", "bootstrap"), default="sandwich")
    p.add_argument("--P", type=int, default=20, help="bootstrap outer draws")
    p.add_argument("--M", type=int, default=50, help="bootstrap inner draws")
    p.add_argument("--draws", type=int, default=20, help="placements for corrected-sim")
    p.add_argument("--theta", type=float, help="Gumbel parameter for corrected-copula "
                   "(fitted from the data when omitted)")
    p.add_argument("--treat-p", type=float, help="treatment probability for the dummy estimator")
    p.add_argument("--instruments", type=int, default=2, help="SAR instrument depth k")
    p.add_argument("--eta-mode", choices=("naive", "feasible", "oracle"), default="feasible",
                   help="SAR correction")
    p.add_argument("--true-edges", help="true network, required for --eta-mode oracle")

    p = sub.add_parser("robustness", help="break-even eta and missing degree")
    p.add_argument("--tau", type=float, required=True, help="effect size to defend")
    p.add_argument("--beta-ols", type=float, help="naive estimate (instead of data files)")
    p.add_argument("--edges")
    p.add_argument("--data")
    p.add_argument("--n", type=int)
    p.add_argument("--symmetrize", action="store_true")
    p.add_argument("--stats")
    p.add_argument("--eta-range", type=float, nargs=2, metavar=("LO", "HI"))

    p = sub.add_parser("bootstrap", help="two-level placement bootstrap standard error")
    _add_inputs(p)
    p.add_argument("--P", type=int, default=20, help="outer draws (missing networks)")
    p.add_argument("--M", type=int, default=50, help="inner pairs resamples")

    p = sub.add_parser("fit-copula", help="fit a Gumbel copula between treatment and degree")
    p.add_argument("--data", required=True,
                   help="node data CSV; a 'degree' column is used when no edges are given")
    p.add_argument("--edges", help="sampled network; pairs use the sampled degree")
    p.add_argument("--n", type=int)
    p.add_argument("--cap", type=int, help="keep only nodes whose sampled degree is below the cap")
    return parser


def _load(args, need_y=True):
    data = read_data(args.data, args.n)
    n = data["x"].size
    H = read_edges(args.edges, n, symmetrize=getattr(args, "symmetrize", False))
    if H.n != n:
        raise UsageError(f"edge list has {H.n} nodes but the data file has {n}")
    if need_y and data["y"] is None:
        raise UsageError("the data file needs a y column")
    stats = read_stats(args.stats) if getattr(args, "stats", None) else None
    return H, data, stats


def _need_stats(stats, what):
    if stats is None:
        raise UsageError(f"{what} needs --stats")
    return stats


def _rows(H, cap):
    return None if cap is None else np.flatnonzero(H.row_nnz() >= cap)


def _missing_per_node(stats) -> float:
    if stats.n_bad == 0:
        return 0.0
    if stats.mean_missing_bad is None:
        raise UsageError("stats lack d_B_bar")
    return stats.share_bad * stats.mean_missing_bad


def _estimate_linear(args, H, data, stats, seed):
    x, y, W = data["x"], data["y"], data.get("W")
    ols = ols_spillover(H, x, y, W)
    method = LINEAR_METHODS[args.method]
    rng = np.random.default_rng(seed)
    diag = {}
    if method == "ols":
        res, eta = ols, 0.0
    elif method == "dummy":
        res = dummy_estimator(H, x, y, _need_stats(stats, "dummy"), treat_p=args.treat_p)
        eta = None
    else:
        if method == "corrected_known":
            if args.eta is None:
                raise UsageError("corrected-known needs --eta")
            eta = args.eta
        elif method == "corrected_indep":
            eta = eta_hat_independent(H, x, _need_stats(stats, args.method))
        elif method == "corrected_cond":
            eta = eta_hat_conditional(H, x, _need_stats(stats, args.method), diagnostics=diag)
        elif method == "corrected_sim":
            st = _need_stats(stats, args.method)
            eta = 0.0 if st.n_bad == 0 else eta_hat_simulated(
                H, x, st.mean_missing_bad, st.n_bad, rng, args.draws, _rows(H, args.cap))
        else:
            if args.cap is None or "degree" not in data:
                raise UsageError("corrected-copula needs --cap and a 'degree' column in the data")
            d_h = H.row_nnz()
            if args.theta is None:
                keep = d_h < args.cap
                model = fit_gumbel(x[keep], d_h[keep])
            else:
                model = CopulaModel(args.theta)
            model = model.with_marginals(x_sample=x, d_sample=data["degree"])
            diag["theta"] = model.theta
            eta = eta_hat_copula(H, x, model, args.cap)
        res = apply_eta(ols, eta, method)
    out = res.to_dict()
    out["diagnostics"] = {**out["diagnostics"], **diag}
    out["beta_ols"] = ols.beta_hat
    if args.se == "sandwich" and eta is not None:
        if W is not None:
            raise UsageError("the sandwich formula is implemented without covariates; use --se none")
        resid = y - ols.beta_hat * spillovers(H, x)
        rep = sandwich_known_eta(H, x, resid, eta)
        out.update(res.with_se(rep.se).to_dict() | {"beta_ols": ols.beta_hat})
        out["se_method"] = rep.method
    elif args.se == "bootstrap":
        st = _need_stats(stats, "--se bootstrap")
        cfg = BootstrapConfig(args.P, args.M, seed)
        rep = bootstrap_se(H, x, y, _missing_per_node(st), cfg, rows=_rows(H, args.cap))
        out.update(res.with_se(rep.se).to_dict() | {"beta_ols": ols.beta_hat})
        out["se_method"] = rep.method
        out["bootstrap"] = rep.components
    return out


def _estimate_sar(args, H, data, stats):
    x, y = data["x"], data["y"]
    k = args.instruments
    if args.eta_mode == "naive":
        J = build_instruments(H, x, k)
        est = tsls(H, x, y, J)
        eta = None
    else:
        st = _need_stats(stats, "a corrected SAR fit")
        e = expected_missing_degrees(st, _rows(H, args.cap))
        J = build_instruments_corrected(H, x, e, k)
        base = tsls(H, x, y, J)
        if args.eta_mode == "feasible":
            eta = eta_matrix_feasible(base, H, e, y)
        else:
            if not args.true_edges:
                raise UsageError("--eta-mode oracle needs --true-edges")
            G = read_edges(args.true_edges, H.n, symmetrize=args.symmetrize)
            eta = eta_matrix_oracle(base, decompose(G, H).missing, y)
        est = debias_tsls(base, eta, args.eta_mode)
    out = est.to_dict()
    out["instruments"] = list(J.labels)
    out["dropped_instruments"] = list(J.dropped)
    if args.se != "none":
        z = np.column_stack([spillovers(H, y), x])
        resid = y - z @ (np.eye(2) + (eta if eta is not None else 0)) @ est.theta
        v = sar_sandwich_variance(z, J, resid, eta)
        out["se"] = [float(np.sqrt(v[0, 0])), float(np.sqrt(v[1, 1]))]
        out["se_method"] = "sandwich"
    return out


def _cmd_mc(args, seed):
    cfg = ExperimentConfig.from_json(args.config) if args.config else \
        ExperimentConfig.from_dict({"design": args.design})
    over = {}
    if args.reps is not None:
        over["reps"] = args.reps
    if args.nodes is not None:
        over["n"] = args.nodes
    if seed is not None:
        over["seed"] = seed
    if over:
        cfg = cfg.with_overrides(**over)
    res = run_experiment(cfg, threads=max(1, args.threads))
    out_dir = args.out or cfg.data.get("output_dir", "out")
    paths = emit_tables(res, out_dir)
    return {"files": [str(p) for p in paths], "content_hash": cfg.content_hash(),
            "summary": res.summary()}


def _cmd_robustness(args):
    if args.beta_ols is not None:
        ols = EstimateResult(args.beta_ols)
        return robustness(ols, args.tau, eta_range=args.eta_range).to_dict()
    if not (args.edges and args.data):
        raise UsageError("robustness needs --beta-ols or both --edges and --data")
    H, data, stats = _load(args)
    ols = ols_spillover(H, data["x"], data["y"], data.get("W"))
    rep = robustness(ols, args.tau, H if stats else None, data["x"], stats, args.eta_range)
    return rep.to_dict() | {"beta_ols": ols.beta_hat}


def _cmd_bootstrap(args, seed):
    H, data, stats = _load(args)
    st = _need_stats(stats, "bootstrap")
    cfg = BootstrapConfig(args.P, args.M, seed)
    rep = bootstrap_se(H, data["x"], data["y"], _missing_per_node(st), cfg,
                       rows=_rows(H, args.cap), n_bad_hint=st.n_bad)
    c = rep.components
    return {"se": rep.se, "P": c["P"], "M": c["M"], "seed": c["seed"],
            "placement": c["placement"], "mean": c["mean"],
            "percentile_ci": c["percentile_ci"], "links_placed": c["links_placed"]}


def _cmd_fit_copula(args):
    data = read_data(args.data, args.n)
    x = data["x"]
    if args.edges:
        H = read_edges(args.edges, x.size)
        d = H.row_nnz().astype(float)
    elif "degree" in data:
        d = data["degree"]
    else:
        raise UsageError("fit-copula needs --edges or a 'degree' column")
    if args.cap is not None:
        keep = d < args.cap
        x, d = x[keep], d[keep]
    return fit_gumbel(x, d).to_json()


def _run(args) -> dict:
    seed = args.seed
    if args.command == "mc":
        return _cmd_mc(args, seed)
    seed = 0 if seed is None else seed
    if args.command == "estimate":
        H, data, stats = _load(args)
        if args.model == "sar":
            return _estimate_sar(args, H, data, stats)
        return _estimate_linear(args, H, data, stats, seed)
    if args.command == "robustness":
        return _cmd_robustness(args)
    if args.command == "bootstrap":
        return _cmd_bootstrap(args, seed)
    return _cmd_fit_copula(args)


def main(argv=None) -> int:
    """Run the command line interface and return the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        result = _run(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except DimensionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NetspillError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    text = json.dumps(result, indent=2, sort_keys=True, default=_json_default)
    print(text)
    if args.out and args.command != "mc":
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{args.command}.json").write_text(text + "\n")
    return 0


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


if __name__ == "__main__":
    sys.exit(main())
