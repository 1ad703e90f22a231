"""Command-line front end: dataset generation, inference, and phase analysis.

Commands emit CSV/JSON only (plotting stays downstream) and every output
embeds the fully resolved parameter set and seed so reruns are reproducible.
Exit codes: 0 success, 2 bad specification, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .amp import AmpConfig, amp_run, effective_noise, fisher_score, majority_vote, oracle_error
from .bp import BpConfig, FactorGraph, bp_run, bp_two_init_compare, reliability_atoms
from .errors import CrowdAmpError
from .model import (AnswerMatrix, GroundTruth, ModelParams, SparseRegimeConfig,
                    aligned_error_rate, error_rate, mse_theta, read_ground_truth,
                    sample_answers_dense, sample_answers_sparse, sample_ground_truth,
                    write_ground_truth)
from .phase import classify_phase, find_thresholds, sweep_grid, write_sweep_csv
from .priors import (GaussianMixture, LabelPrior, RademacherBernoulli, Tabulated,
                     beta_reliability_prior)
from .rank2 import Rank2Config, amp_rank2_run
from .rng import fresh_seed
from .state_evolution import se_fixed_point

_BETA_PRIOR_NODES = 513
_BETA_PRIOR_NODES_RANK2 = 63  # tensor grid cap for the 2-d worker denoiser


def parse_prior(spec: str, n_workers: int | None = None, nu: float | None = None,
                n_nodes: int = _BETA_PRIOR_NODES):
    """Parse the prior mini-grammar.

    rb:<mu>,<lambda> | gm:<mu>,<mL>,<mR>,<vL>,<vR> | tab:<path> | beta:<a>,<b>

    Beta priors on raw success probabilities need (n_workers, nu) to map onto
    the rescaled reliability scale theta = (2p - 1) sqrt(N / nu).
    """
    kind, _, rest = spec.partition(":")
    try:
        if kind == "rb":
            mu, lam = (float(x) for x in rest.split(","))
            return RademacherBernoulli(mu=mu, lam=lam)
        if kind == "gm":
            mu, ml, mr, vl, vr = (float(x) for x in rest.split(","))
            return GaussianMixture(mu=mu, mean_left=ml, mean_right=mr,
                                   var_left=vl, var_right=vr)
        if kind == "tab":
            data = np.loadtxt(rest, delimiter=",", skiprows=1, ndmin=2)
            return Tabulated(values=data[:, 0], weights=data[:, 1] / data[:, 1].sum())
        if kind == "beta":
            a, b = (float(x) for x in rest.split(","))
            if n_workers is None or nu is None:
                raise ValueError("beta:<a>,<b> priors need --nu and the worker count")
            return beta_reliability_prior(a, b, n_workers, nu, n_nodes=n_nodes)
    except ValueError:
        raise
    except Exception as exc:
        raise ValueError(f"cannot parse prior spec {spec!r}: {exc}") from exc
    raise ValueError(f"unknown prior kind {kind!r} in {spec!r}")


def _parse_grid(spec: str):
    """Parse ``name=lo:hi:count[,name=lo:hi:count]`` into sweep axes."""
    axes = []
    for part in spec.split(","):
        name, _, rng = part.partition("=")
        lo, hi, count = rng.split(":")
        axes.append((name.strip(), np.linspace(float(lo), float(hi), int(count))))
    return axes


def _dump_json(path, payload) -> None:
    def default(obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        return str(obj)

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=default)


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else fresh_seed()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lp = LabelPrior(beta=args.beta)
    if args.sparse:
        config = SparseRegimeConfig(degree=args.degree, n_scale=args.n_scale)
        params = config.params(args.n, args.m)
    else:
        params = ModelParams(n_workers=args.n, n_tasks=args.m, nu=args.nu, rho=args.rho)
    wp = parse_prior(args.prior, n_workers=params.n_workers, nu=params.nu)
    gt = sample_ground_truth(params, wp, lp, seed)
    if args.sparse:
        answers = sample_answers_sparse(gt, config, params, seed)
    else:
        answers = sample_answers_dense(gt, params, seed)
    answers.to_csv(out / "answers.csv", dims_path=out / "dims.json")
    write_ground_truth(gt, out / "truth_theta.csv", out / "truth_v.csv")
    _dump_json(out / "meta.json", {
        "command": "generate",
        "version": __version__,
        "seed": seed,
        "params": {"n_workers": params.n_workers, "n_tasks": params.n_tasks,
                   "nu": params.nu, "rho": params.rho, "alpha": params.alpha},
        "sparse": bool(args.sparse),
        "degree": args.degree if args.sparse else None,
        "n_scale": args.n_scale if args.sparse else None,
        "prior": args.prior,
        "beta": args.beta,
        "n_answers": len(answers),
    })
    print(f"wrote {out}/answers.csv ({len(answers)} answers), truth CSVs, meta.json")
    return 0


def _load_instance(args):
    dims = args.dims if args.dims else (Path(args.answers).parent / "dims.json")
    answers = AnswerMatrix.from_csv(args.answers, dims_path=dims)
    gt = None
    if args.truth_theta and args.truth_v:
        gt = read_ground_truth(args.truth_theta, args.truth_v)
    return answers, gt


def cmd_infer(args) -> int:
    answers, gt = _load_instance(args)
    seed = args.seed if args.seed is not None else fresh_seed()
    nu = args.nu if args.nu is not None else float(answers.n_workers)  # nu = N default
    rho = args.rho if args.rho is not None else answers.empirical_rho()
    delta = args.delta if args.delta is not None else effective_noise(rho, nu)
    lp = LabelPrior(beta=args.beta)
    resolved = {
        "command": "infer", "version": __version__, "algo": args.algo,
        "answers": str(args.answers), "nu": nu, "rho": rho, "delta": delta,
        "beta": args.beta, "prior": args.prior, "prior_t": args.prior_t,
        "init": args.init, "damping": args.damping, "tol": args.tol,
        "max_iter": args.max_iter, "early_stop": args.early_stop, "seed": seed,
    }
    result: dict = {"spec": resolved}

    if args.algo == "majority":
        labels = majority_vote(answers)
        result["converged"] = True
    elif args.algo == "oracle":
        if gt is None:
            raise ValueError("oracle inference needs --truth-theta and --truth-v")
        params = ModelParams(n_workers=answers.n_workers, n_tasks=answers.n_tasks,
                             nu=nu, rho=rho)
        result["error_rate"] = oracle_error(answers, gt, params, lp)
        _dump_json(args.out, result)
        print(f"oracle ER = {result['error_rate']:.4f}")
        return 0
    elif args.algo == "amp":
        wp = parse_prior(args.prior, n_workers=answers.n_workers, nu=nu)
        cfg = AmpConfig(tol=args.tol, max_iter=args.max_iter, damping=args.damping,
                        init=args.init, early_stop=args.early_stop)
        run = amp_run(fisher_score(answers, nu), delta, wp, lp, cfg, seed=seed,
                      ground_truth=gt if args.init == "ground_truth" else None)
        labels = run.labels
        result.update({"converged": run.converged, "n_iter": run.n_iter,
                       "stopped_early": run.stopped_early,
                       "theta_hat": run.theta_hat, "v_hat": run.v_hat,
                       "trajectory_change": run.trajectory.change_norm})
        if gt is not None:
            result["mse_theta"] = mse_theta(run.theta_hat, gt.theta0)
    elif args.algo == "amp2c":
        wp_s = parse_prior(args.prior, n_workers=answers.n_workers, nu=nu,
                           n_nodes=_BETA_PRIOR_NODES_RANK2)
        spec_t = args.prior_t or args.prior
        wp_t = parse_prior(spec_t, n_workers=answers.n_workers, nu=nu,
                           n_nodes=_BETA_PRIOR_NODES_RANK2)
        cfg = Rank2Config(tol=args.tol, max_iter=args.max_iter, damping=args.damping,
                          init=args.init if args.init != "prior_sample" else "majority_vote",
                          early_stop=args.early_stop)
        run = amp_rank2_run(fisher_score(answers, nu), delta, wp_s, wp_t, lp, cfg, seed=seed)
        labels = run.labels
        result.update({"converged": run.converged, "n_iter": run.n_iter,
                       "stopped_early": run.stopped_early,
                       "theta_hat": run.theta_hat, "posterior_true": run.posterior_true})
    elif args.algo == "bp":
        wp = parse_prior(args.prior, n_workers=answers.n_workers, nu=nu)
        reliability = reliability_atoms(wp, nu, answers.n_workers)
        cfg = BpConfig(reliability=reliability, tol=min(args.tol, 1e-10),
                       max_iter=args.max_iter, damping=max(args.damping, 0.1),
                       init="uninformative")
        run = bp_run(FactorGraph.from_answers(answers), cfg, lp, seed=seed)
        labels = run.labels
        result.update({"converged": run.converged, "n_iter": run.n_iter,
                       "marginals": run.marginals})
    else:
        raise ValueError(f"unknown algorithm {args.algo!r}")

    result["labels"] = labels
    if gt is not None:
        result["error_rate"] = error_rate(labels, gt.v0)
        result["error_rate_aligned"] = aligned_error_rate(labels, gt.v0)
    _dump_json(args.out, result)
    msg = f"{args.algo}: wrote {args.out}"
    if "error_rate" in result:
        msg += f" (ER = {result['error_rate']:.4f})"
    print(msg)
    return 0


def _se_rows(args):
    wp = parse_prior(args.prior)
    lp = LabelPrior(beta=args.beta)
    inits = ("uninformative", "informative") if args.init == "both" else (args.init,)
    rows = []
    for init in inits:
        fp = se_fixed_point(init, args.alpha, args.delta, wp, lp,
                            tol=args.tol, max_iter=args.max_iter)
        rows.append({"init": init, "m_theta": fp.state.m_theta, "m_v": fp.state.m_v,
                     "mse_theta": fp.mse_theta, "er_v": fp.er_v, "r_v": fp.r_v,
                     "iterations": fp.iterations, "converged": fp.converged})
    return rows


def cmd_se(args) -> int:
    rows = _se_rows(args)
    payload = {"command": "se", "version": __version__,
               "spec": {"alpha": args.alpha, "delta": args.delta, "prior": args.prior,
                        "beta": args.beta, "tol": args.tol, "max_iter": args.max_iter},
               "fixed_points": rows}
    _dump_json(args.out, payload)
    for row in rows:
        print(f"{row['init']:>14}: m_theta={row['m_theta']:.6g} m_v={row['m_v']:.6g} "
              f"ER={row['er_v']:.4f} ({row['iterations']} iters)")
    return 0


def cmd_analyze(args) -> int:
    if args.what == "thresholds":
        wp = parse_prior(args.prior)
        lp = LabelPrior(beta=args.beta)
        lo, hi = (float(x) for x in args.bracket.split(":"))
        th = find_thresholds(args.alpha, wp, lp, (lo, hi), rel_tol=args.rel_tol)
        payload = {"command": "analyze thresholds", "version": __version__,
                   "spec": {"alpha": args.alpha, "prior": args.prior, "beta": args.beta,
                            "bracket": [lo, hi], "rel_tol": args.rel_tol},
                   "delta_c": th.delta_c, "delta_alg": th.delta_alg,
                   "delta_it": th.delta_it, "delta_sp": th.delta_sp}
        _dump_json(args.out, payload)
        print(f"delta_c={th.delta_c} delta_alg={th.delta_alg} "
              f"delta_it={th.delta_it} delta_sp={th.delta_sp}")
        return 0
    if args.what == "sweep":
        axes = _parse_grid(args.grid)
        rows = sweep_grid(axes, alpha=args.alpha, mu=args.mu, lam=args.lam,
                          beta=args.beta, delta=args.delta, threads=args.threads)
        write_sweep_csv(rows, args.out)
        _dump_json(str(args.out) + ".meta.json", {
            "command": "analyze sweep", "version": __version__,
            "axes": [(name, values.tolist()) for name, values in axes],
            "base": {"alpha": args.alpha, "mu": args.mu, "lambda": args.lam,
                     "beta": args.beta, "delta": args.delta},
            "threads": args.threads, "n_rows": len(rows)})
        print(f"wrote {len(rows)} sweep rows to {args.out}")
        return 0
    if args.what == "se":
        return cmd_se(args)
    raise ValueError(f"unknown analyze subcommand {args.what!r}")


def cmd_compare_init(args) -> int:
    if args.mode == "se":
        if args.delta is None:
            raise ValueError("compare-init --mode se needs --delta")
        wp = parse_prior(args.prior)
        lp = LabelPrior(beta=args.beta)
        label = classify_phase(args.alpha, args.delta, wp, lp)
        payload = {
            "command": "compare-init", "mode": "se", "version": __version__,
            "spec": {"alpha": args.alpha, "delta": args.delta, "prior": args.prior,
                     "beta": args.beta},
            "phase": label.phase,
            "uninformative": {"m_theta": label.uninformative.state.m_theta,
                              "er_v": label.uninformative.er_v},
            "informative": {"m_theta": label.informative.state.m_theta,
                            "er_v": label.informative.er_v},
            "phi_uninformative": label.phi_uninformative,
            "phi_informative": label.phi_informative,
            "coexists": abs(label.informative.state.m_theta
                            - label.uninformative.state.m_theta) > 1e-6,
        }
        _dump_json(args.out, payload)
        print(f"phase={label.phase} "
              f"ER uninf={label.uninformative.er_v:.4f} inf={label.informative.er_v:.4f}")
        return 0
    # BP on an instance
    answers, gt = _load_instance(args)
    if gt is None:
        raise ValueError("compare-init --mode bp needs --truth-theta and --truth-v")
    seed = args.seed if args.seed is not None else fresh_seed()
    nu = args.nu if args.nu is not None else float(answers.n_workers)
    wp = parse_prior(args.prior, n_workers=answers.n_workers, nu=nu)
    reliability = reliability_atoms(wp, nu, answers.n_workers)
    cfg = BpConfig(reliability=reliability, max_iter=args.max_iter, damping=args.damping)
    report = bp_two_init_compare(FactorGraph.from_answers(answers), cfg,
                                 LabelPrior(beta=args.beta), gt, seed=seed)
    payload = {
        "command": "compare-init", "mode": "bp", "version": __version__,
        "spec": {"answers": str(args.answers), "prior": args.prior, "nu": nu,
                 "beta": args.beta, "damping": args.damping,
                 "max_iter": args.max_iter, "seed": seed},
        "er_uninformative": report.er_uninformative,
        "er_informative": report.er_informative,
        "message_distance": report.message_distance,
        "coexists": report.coexists,
    }
    _dump_json(args.out, payload)
    print(f"BP two-init: ER uninf={report.er_uninformative:.4f} "
          f"inf={report.er_informative:.4f} distance={report.message_distance:.3g} "
          f"coexists={report.coexists}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdamp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="sample a synthetic instance to CSV")
    mode = gen.add_mutually_exclusive_group(required=True)
    mode.add_argument("--dense", action="store_true")
    mode.add_argument("--sparse", action="store_true")
    gen.add_argument("--n", type=int, required=True, help="number of workers")
    gen.add_argument("--m", type=int, required=True, help="number of tasks")
    gen.add_argument("--nu", type=float, default=1.0, help="channel scale (dense)")
    gen.add_argument("--rho", type=float, default=0.0, help="missing fraction (dense)")
    gen.add_argument("--d", dest="degree", type=int, default=10, help="tasks per worker (sparse)")
    gen.add_argument("--n-scale", type=float, default=1.0, help="nu = n_scale * N (sparse)")
    gen.add_argument("--prior", required=True, help="worker prior spec")
    gen.add_argument("--beta", type=float, default=0.5)
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--out", default=".", help="output directory")
    gen.set_defaults(func=cmd_generate)

    inf = sub.add_parser("infer", help="run an aggregation algorithm on an instance")
    inf.add_argument("--algo", required=True,
                     choices=("amp", "amp2c", "bp", "majority", "oracle"))
    inf.add_argument("--answers", required=True)
    inf.add_argument("--dims", default=None)
    inf.add_argument("--truth-theta", default=None)
    inf.add_argument("--truth-v", default=None)
    inf.add_argument("--prior", default="rb:0.5,0.5")
    inf.add_argument("--prior-t", default=None, help="specificity prior (amp2c)")
    inf.add_argument("--beta", type=float, default=0.5)
    inf.add_argument("--nu", type=float, default=None, help="default: nu = N")
    inf.add_argument("--rho", type=float, default=None, help="default: empirical")
    inf.add_argument("--delta", type=float, default=None)
    inf.add_argument("--init", default="prior_sample",
                     choices=("prior_sample", "prior_mean", "majority_vote", "ground_truth"))
    inf.add_argument("--damping", type=float, default=0.0)
    inf.add_argument("--tol", type=float, default=1e-8)
    inf.add_argument("--max-iter", type=int, default=1000)
    inf.add_argument("--early-stop", type=int, default=None)
    inf.add_argument("--seed", type=int, default=None)
    inf.add_argument("--out", default="results.json")
    inf.set_defaults(func=cmd_infer)

    def add_se_args(p):
        p.add_argument("--alpha", type=float, default=1.0)
        p.add_argument("--delta", type=float, required=True)
        p.add_argument("--prior", required=True)
        p.add_argument("--beta", type=float, default=0.5)
        p.add_argument("--init", default="both",
                       choices=("both", "informative", "uninformative"))
        p.add_argument("--tol", type=float, default=1e-12)
        p.add_argument("--max-iter", type=int, default=100_000)
        p.add_argument("--out", default="se.json")

    se = sub.add_parser("se", help="state-evolution fixed points")
    add_se_args(se)
    se.set_defaults(func=cmd_se)

    ana = sub.add_parser("analyze", help="thresholds, sweeps, SE tables")
    ana_sub = ana.add_subparsers(dest="what", required=True)

    th = ana_sub.add_parser("thresholds")
    th.add_argument("--alpha", type=float, default=1.0)
    th.add_argument("--prior", required=True)
    th.add_argument("--beta", type=float, default=0.5)
    th.add_argument("--bracket", default="0.005:0.1", help="lo:hi")
    th.add_argument("--rel-tol", type=float, default=1e-4)
    th.add_argument("--out", default="thresholds.json")
    th.set_defaults(func=cmd_analyze)

    sw = ana_sub.add_parser("sweep")
    sw.add_argument("--grid", required=True, help="name=lo:hi:count[,name=lo:hi:count]")
    sw.add_argument("--alpha", type=float, default=1.0)
    sw.add_argument("--mu", type=float, default=0.5)
    sw.add_argument("--lambda", dest="lam", type=float, default=0.5)
    sw.add_argument("--beta", type=float, default=0.5)
    sw.add_argument("--delta", type=float, default=0.1)
    sw.add_argument("--threads", type=int,
                    default=int(os.environ.get("CROWDAMP_THREADS", "1")))
    sw.add_argument("--out", default="sweep.csv")
    sw.set_defaults(func=cmd_analyze)

    ase = ana_sub.add_parser("se")
    add_se_args(ase)
    ase.set_defaults(func=cmd_analyze)

    cmp_ = sub.add_parser("compare-init",
                          help="two-initialization comparison (BP instance or SE)")
    cmp_.add_argument("--mode", choices=("bp", "se"), required=True)
    cmp_.add_argument("--answers", default=None)
    cmp_.add_argument("--dims", default=None)
    cmp_.add_argument("--truth-theta", default=None)
    cmp_.add_argument("--truth-v", default=None)
    cmp_.add_argument("--prior", required=True)
    cmp_.add_argument("--beta", type=float, default=0.5)
    cmp_.add_argument("--nu", type=float, default=None)
    cmp_.add_argument("--alpha", type=float, default=1.0)
    cmp_.add_argument("--delta", type=float, default=None)
    cmp_.add_argument("--damping", type=float, default=0.1)
    cmp_.add_argument("--max-iter", type=int, default=1000)
    cmp_.add_argument("--seed", type=int, default=None)
    cmp_.add_argument("--out", default="compare.json")
    cmp_.set_defaults(func=cmd_compare_init)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: bad specification: {exc}", file=sys.stderr)
        return 2
    except CrowdAmpError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
