"""Command line interface.

Subcommands:
    experiment  run a Monte Carlo sweep (JSON config or named preset) and
                write aggregate.csv / trials.csv
    solve       run one estimator on a problem file
    gen         synthesize a problem file
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import harness
from .errors import ConfigurationError
from .harness import EstimatorSpec, run_estimator
from .model import (
    FieldKind,
    GenConfig,
    evaluate,
    generate_problem,
    load_problem,
    oracle_mse,
    save_problem,
)
from .priors import three_layer, two_layer

AGGREGATE_HEADER = [
    "sweep_name", "sweep_value", "estimator", "mean_mse", "mean_k_hat",
    "mean_iters", "mean_oracle_mse", "trials", "snr_definition",
    "estimator_config",
]
TRIALS_HEADER = [
    "sweep_name", "sweep_value", "estimator", "trial", "seed", "status",
    "mse", "k_hat", "iterations", "support_exact", "oracle_mse",
]

ESTIMATOR_NAMES = (
    "emrvm", "emlaplace", "em2l", "em3l",
    "fastrvm", "fastlaplace", "fast2l", "fast3l",
    "vmp2l", "vmp3l",
)


def _fmt(x):
    if isinstance(x, float):
        return "%.12g" % x
    return x


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _cmd_experiment(args) -> int:
    if args.preset:
        if args.preset not in harness.PRESETS:
            print(f"unknown preset {args.preset!r}; available: "
                  f"{', '.join(sorted(harness.PRESETS))}", file=sys.stderr)
            return 2
        cfg = harness.PRESETS[args.preset]()
    elif args.config:
        cfg = harness.load_experiment_config(args.config)
    else:
        print("experiment requires --config or --preset", file=sys.stderr)
        return 2
    if args.threads:
        cfg.threads = args.threads
    os.makedirs(args.out, exist_ok=True)
    aggregates, trials = harness.run_experiment(cfg)
    _write_csv(
        os.path.join(args.out, "aggregate.csv"), AGGREGATE_HEADER,
        [[a.sweep_name, a.sweep_value, a.estimator, a.mean_mse, a.mean_k_hat,
          a.mean_iterations, a.mean_oracle_mse, a.trials_completed,
          a.snr_definition, a.estimator_config] for a in aggregates],
    )
    _write_csv(
        os.path.join(args.out, "trials.csv"), TRIALS_HEADER,
        [[t.sweep_name, t.sweep_value, t.estimator, t.trial, t.seed, t.status,
          t.mse, t.k_hat, t.iterations, t.support_exact, t.oracle_mse]
         for t in trials],
    )
    failed = sum(1 for t in trials if t.status != "ok")
    if failed:
        print(f"warning: {failed} trial run(s) failed; aggregates cover "
              f"completed trials only", file=sys.stderr)
        return 3
    return 0


def _estimator_from_args(args) -> EstimatorSpec:
    name = args.estimator
    eps = args.epsilon
    eta = args.eta
    a, b = args.a, args.b
    if name == "emrvm":
        return EstimatorSpec(name, "em", two_layer(1.0, 0.0))
    if name == "emlaplace":
        return EstimatorSpec(name, "em", two_layer(1.0, eta if eta is not None else 1.0))
    if name == "em2l":
        return EstimatorSpec(name, "em", two_layer(
            eps if eps is not None else 1.0, eta if eta is not None else 1.0))
    if name == "em3l":
        return EstimatorSpec(name, "em", three_layer(
            eps if eps is not None else 1.0,
            a if a is not None else 1.0, b if b is not None else 0.1))
    if name == "fastrvm":
        return EstimatorSpec(name, "fast", two_layer(1.0, 0.0))
    if name == "fastlaplace":
        return EstimatorSpec(name, "fast", three_layer(
            1.0, a if a is not None else 1.0, b if b is not None else 0.1),
            shared_eta=True)
    if name == "fast2l":
        return EstimatorSpec(name, "fast", two_layer(
            eps if eps is not None else 0.0, eta if eta is not None else 1.0))
    if name == "fast3l":
        return EstimatorSpec(name, "fast", three_layer(
            eps if eps is not None else 0.0,
            a if a is not None else 1.0, b if b is not None else 0.1))
    if name == "vmp2l":
        return EstimatorSpec(name, "vmp", two_layer(
            eps if eps is not None else 1.0, eta if eta is not None else 1.0))
    if name == "vmp3l":
        return EstimatorSpec(name, "vmp", three_layer(
            eps if eps is not None else 1.0,
            a if a is not None else 1.0, b if b is not None else 0.1))
    raise ConfigurationError(f"unknown estimator {name!r}")


def _cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    if args.lam is not None:
        problem.lambda_true = args.lam
    spec = _estimator_from_args(args)
    estimate, metrics = run_estimator(spec, problem)
    have_truth = np.any(problem.alpha_true != 0)
    print(f"estimator: {spec.name}")
    print(f"k_hat: {metrics.k_hat}")
    print(f"iterations: {metrics.iterations}")
    if have_truth:
        print(f"mse: {_fmt(metrics.mse)}")
        print(f"support_exact: {metrics.support_exact}")
        try:
            print(f"oracle_mse: {_fmt(oracle_mse(problem))}")
        except Exception:
            pass
    out = args.out or (args.problem + ".estimate.txt")
    with open(out, "w") as fh:
        if problem.field is FieldKind.COMPLEX:
            for z in estimate:
                fh.write("%.17g %.17g\n" % (z.real, z.imag))
        else:
            for v in estimate.real:
                fh.write("%.17g\n" % v)
    print(f"estimate written to {out}")
    return 0


def _cmd_gen(args) -> int:
    cfg = GenConfig(M=args.m, L=args.l, K=args.k, snr_db=args.snr,
                    field=FieldKind(args.field), seed=args.seed)
    problem = generate_problem(cfg)
    save_problem(problem, args.out, include_truth=not args.no_truth)
    print(f"problem written to {args.out} "
          f"(M={args.m}, L={args.l}, K={args.k}, snr={args.snr} dB, "
          f"field={args.field}, seed={args.seed}, lambda={_fmt(problem.lambda_true)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bksbl",
        description="Sparse Bayesian learning under Bessel-K hierarchical priors",
    )
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("experiment", help="run a Monte Carlo sweep")
    pe.add_argument("--config", help="JSON experiment config")
    pe.add_argument("--preset", help="named preset (e.g. fig4-complex-desk)")
    pe.add_argument("--out", required=True, help="output directory")
    pe.add_argument("--threads", type=int, default=0,
                    help="parallel trial processes (default: serial)")
    pe.set_defaults(func=_cmd_experiment)

    ps = sub.add_parser("solve", help="run one estimator on a problem file")
    ps.add_argument("--problem", required=True)
    ps.add_argument("--estimator", required=True, choices=ESTIMATOR_NAMES)
    ps.add_argument("--epsilon", type=float, default=None)
    ps.add_argument("--eta", type=float, default=None)
    ps.add_argument("--a", type=float, default=None)
    ps.add_argument("--b", type=float, default=None)
    ps.add_argument("--lambda", dest="lam", type=float, default=None,
                    help="noise precision (default: value stored in the file)")
    ps.add_argument("--seed", type=int, default=0,
                    help="reserved; all estimators are deterministic")
    ps.add_argument("--out", default=None, help="estimate output path")
    ps.set_defaults(func=_cmd_solve)

    pg = sub.add_parser("gen", help="synthesize a problem file")
    pg.add_argument("--m", type=int, required=True)
    pg.add_argument("--l", type=int, required=True)
    pg.add_argument("--k", type=int, required=True)
    pg.add_argument("--snr", type=float, default=30.0)
    pg.add_argument("--field", choices=["real", "complex"], default="real")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--out", required=True)
    pg.add_argument("--no-truth", action="store_true",
                    help="omit ground truth from the file")
    pg.set_defaults(func=_cmd_gen)
    return p


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except (ConfigurationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():  # console-script entry
    raise SystemExit(cli())


if __name__ == "__main__":
    raise SystemExit(cli())
