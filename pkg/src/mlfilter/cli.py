"""Command-line interface.

Subcommands wrap the library operations with file I/O:

    simulate        draw a trajectory from a model config
    kalman          exact linear filter over a trajectory file
    pf              bootstrap particle filter posterior means
    mle             recursive ML estimate at every step
    cov             repeated-sampling error covariance at one step
    omega           fixed-point recursion for the inverse observed information
    score-probe     score and information matrices at a query state
    linear-ss       full linear benchmark experiment
    nonlinear-tanh  full nonlinear benchmark experiment
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errorcov import omega_recursion, repeated_sampling_cov
from .estimator import METHODS, MlConfig, ml_estimate
from .experiments import (ExperimentConfig, load_model, run_linear_experiment,
                          run_nonlinear_experiment)
from .kalman import filter_to_csv, kalman_filter
from .models import LinearModel, simulate, trajectory_from_csv, trajectory_to_csv
from .particle import pf_posterior_mean, pf_run
from .score import particle_score


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump(obj: dict, path: Path, fmt: str) -> None:
    if fmt == "json":
        jsonable = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
                    for k, v in obj.items()}
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(jsonable, fh, indent=2)
        return
    with open(path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        for key, value in obj.items():
            arr = np.atleast_2d(np.asarray(value, dtype=float))
            for i, row in enumerate(arr):
                w.writerow([key, i] + [repr(float(v)) for v in row])


def _load_matrix(path) -> np.ndarray:
    with open(path) as fh:
        return np.asarray(json.load(fh), dtype=float)


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    traj = simulate(model, args.K, args.seed)
    out = _out_dir(args)
    trajectory_to_csv(traj, out / "trajectory.csv")
    print(out / "trajectory.csv")
    return 0


def cmd_kalman(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, LinearModel):
        raise SystemExit("kalman requires a linear model config")
    traj = trajectory_from_csv(args.data)
    states = kalman_filter(model, traj.observations, joseph=args.joseph)
    out = _out_dir(args)
    filter_to_csv(states, out / "filter.csv")
    print(out / "filter.csv")
    if args.at is not None:
        s = states[args.at]
        _dump({"x_post": s.x_post, "P_post": s.P_post}, out / f"kalman_k{args.at}",
              args.format)
    return 0


def cmd_pf(args) -> int:
    model = load_model(args.model)
    traj = trajectory_from_csv(args.data)
    clouds = pf_run(model, traj.observations, args.particles,
                    np.random.default_rng(args.seed), resampling=args.resampling)
    out = _out_dir(args)
    path = out / "pf_means.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        p = clouds[0].particles.shape[1]
        w.writerow(["k"] + [f"pf_{i + 1}" for i in range(p)] + ["ess"])
        for cloud in clouds:
            w.writerow([cloud.k] + [repr(float(v)) for v in pf_posterior_mean(cloud)]
                       + [repr(float(cloud.ess)) if cloud.ess is not None else ""])
    print(path)
    return 0


def cmd_mle(args) -> int:
    model = load_model(args.model)
    traj = trajectory_from_csv(args.data)
    cfg = MlConfig(method=args.method, epsilon=args.epsilon, max_iter=args.max_iter,
                   keep_trace=args.trace)
    clouds = pf_run(model, traj.observations, args.particles,
                    np.random.default_rng(args.seed))
    out = _out_dir(args)
    path = out / "mle.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        p = clouds[0].particles.shape[1]
        w.writerow(["k"] + [f"ml_{i + 1}" for i in range(p)]
                   + ["iterations", "converged", "score_norm"])
        for k in range(1, traj.K + 1):
            res = ml_estimate(model, clouds[k - 1], traj.observations[k - 1], cfg)
            w.writerow([k] + [repr(float(v)) for v in res.x_hat]
                       + [res.iterations, int(res.converged), repr(float(res.final_score_norm))])
            if args.trace:
                with open(out / f"trace_k{k}.csv", "w", newline="") as tf:
                    tw = csv.writer(tf)
                    tw.writerow(["l"] + [f"x_{i + 1}" for i in range(p)])
                    for l, x in enumerate(res.trace):
                        tw.writerow([l] + [repr(float(v)) for v in x])
    print(path)
    return 0


def cmd_cov(args) -> int:
    model = load_model(args.model)
    traj = trajectory_from_csv(args.data)
    cfg = MlConfig(method=args.method, epsilon=args.epsilon, max_iter=args.max_iter)
    est = repeated_sampling_cov(model, traj.observations, args.k, args.replicates,
                                args.particles, args.seed, cfg, threads=args.threads)
    out = _out_dir(args)
    _dump({"x_hat_bar": est.x_hat_bar, "info_hat": est.info_hat, "cov_hat": est.cov_hat,
           "n_replicates": est.n_replicates, "n_failed": est.n_failed},
          out / f"cov_k{args.k}", args.format)
    print(out / f"cov_k{args.k}.{args.format}")
    return 0


def cmd_omega(args) -> int:
    jz = _load_matrix(args.jz)
    jxi = _load_matrix(args.jxi)
    seq = omega_recursion(jz, jxi, max_iter=args.max_iter, tol=args.tol)
    out = _out_dir(args)
    path = out / "omega.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        p = jz.shape[0]
        w.writerow(["l"] + [f"omega_{i + 1}{i + 1}" for i in range(p)])
        for l, om in enumerate(seq.iterates):
            w.writerow([l] + [repr(float(v)) for v in np.diag(om)])
    _dump({"limit": seq.limit, "A": seq.A, "B": seq.B,
           "converged_at": -1 if seq.converged_at is None else seq.converged_at,
           "contraction": seq.contraction}, out / "omega_limit", args.format)
    print(path)
    return 0


def cmd_score_probe(args) -> int:
    model = load_model(args.model)
    traj = trajectory_from_csv(args.data)
    clouds = pf_run(model, traj.observations[:args.k], args.particles,
                    np.random.default_rng(args.seed))
    x = (np.asarray([float(v) for v in args.x.split(",")])
         if args.x else pf_posterior_mean(clouds[args.k]))
    ev = particle_score(model, clouds[args.k - 1], x, traj.observations[args.k - 1])
    out = _out_dir(args)
    _dump({"x": ev.x, "score": ev.score, "complete_info": ev.complete_info,
           "outer_info": ev.outer_info, "observed_info": ev.observed_info,
           "log_pred": ev.log_pred}, out / f"score_k{args.k}", args.format)
    print(out / f"score_k{args.k}.{args.format}")
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(experiment="custom" if args.model else args.experiment,
                           model_path=args.model,
                           K=args.K, N=args.particles, M=args.replicates,
                           seed=args.seed, outdir=args.out, threads=args.threads,
                           method=args.method, render_figures=not args.no_figures)
    runner = (run_linear_experiment if args.experiment == "linear-ss"
              else run_nonlinear_experiment)
    artifacts = runner(cfg)
    print(artifacts.path("manifest"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlfilter",
        description="Maximum-likelihood recursive state estimation toolkit")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True, data=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int,
                       default=max(1, os.cpu_count() or 1))
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--format", choices=("csv", "json"), default="json",
                       help="format for matrix outputs")
        if model:
            p.add_argument("--model", required=True, help="model config JSON")
        if data:
            p.add_argument("--data", required=True, help="trajectory CSV")

    p = sub.add_parser("simulate", help="draw a trajectory")
    common(p)
    p.add_argument("--K", type=int, default=100)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("kalman", help="exact linear filter")
    common(p, data=True)
    p.add_argument("--joseph", action="store_true")
    p.add_argument("--at", type=int, help="also dump x/P at this step")
    p.set_defaults(func=cmd_kalman)

    p = sub.add_parser("pf", help="bootstrap particle filter")
    common(p, data=True)
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--resampling", choices=("multinomial", "systematic"),
                   default="multinomial")
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("mle", help="recursive ML estimation")
    common(p, data=True)
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--method", choices=METHODS, default="em_gradient")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--trace", action="store_true", help="export per-step iterate traces")
    p.set_defaults(func=cmd_mle)

    p = sub.add_parser("cov", help="repeated-sampling error covariance")
    common(p, data=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--replicates", type=int, default=250)
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--method", choices=METHODS, default="em_gradient")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(func=cmd_cov)

    p = sub.add_parser("omega", help="inverse-information fixed-point recursion")
    common(p, model=False)
    p.add_argument("--jz", required=True, help="complete information matrix JSON")
    p.add_argument("--jxi", required=True, help="observed information matrix JSON")
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_omega)

    p = sub.add_parser("score-probe", help="score and information at a query state")
    common(p, data=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--particles", type=int, default=2000)
    p.add_argument("--x", help="comma-separated query state (default: PF mean)")
    p.set_defaults(func=cmd_score_probe)

    for name in ("linear-ss", "nonlinear-tanh"):
        p = sub.add_parser(name, help=f"run the {name} benchmark experiment")
        common(p, model=False)
        p.add_argument("--model", help="custom model config JSON")
        p.add_argument("--K", type=int, default=100)
        p.add_argument("--particles", type=int, default=2000)
        p.add_argument("--replicates", type=int, default=250)
        p.add_argument("--method", choices=METHODS, default="em_gradient")
        p.add_argument("--no-figures", action="store_true")
        p.set_defaults(func=cmd_experiment, experiment=name)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
