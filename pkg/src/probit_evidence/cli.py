"""``bench`` command line.

    bench run --data PATH --estimators all --n-sims 20000 --replications 100 \\
              --seed 42 --format json --out results.json
    bench mle --data PATH --model 0|1
    bench oracle --data PATH
    bench single --data PATH --estimator is --seed S
    bench chain --data PATH --model 1 --iterations 20000 --seed S --out chain.csv

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .bench import (
    ESTIMATORS,
    BenchConfig,
    build_context,
    default_jobs,
    load_pima_csv,
    run_benchmark,
    run_replication,
)
from .errors import ConfigError, DataError, NumericalError
from .gibbs import gibbs_run, write_chain_csv
from .kernels import RngStream
from .model import ProbitModel, fit_mle
from .oracle import QuadratureSpec, quadrature_log_evidence

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

MODEL_COLUMNS = {0: ("glu", "bp"), 1: ("glu", "bp", "ped")}


def _estimator_list(raw: str) -> tuple[str, ...]:
    return tuple(e.strip() for e in raw.split(",") if e.strip())


def _write(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_run(args) -> int:
    jobs = args.jobs if args.jobs is not None else default_jobs()
    config = BenchConfig(
        data_path=args.data,
        estimators=_estimator_list(args.estimators),
        n_sims=args.n_sims,
        replications=args.replications,
        seed=args.seed,
        output_format=args.format,
        output_path=args.out,
        jobs=jobs,
        alpha_weights=args.alpha_weights,
        record_timings=args.timings,
    )
    t0 = time.perf_counter()
    summary = run_benchmark(config)
    text = summary.to_json() if config.output_format == "json" else summary.to_csv()
    _write(text, config.output_path)
    print(summary.table(), file=sys.stderr)
    print(f"total {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return 0


def cmd_mle(args) -> int:
    data = load_pima_csv(args.data)
    model = ProbitModel(data, MODEL_COLUMNS[args.model])
    fit = fit_mle(model, information=args.information)
    print(f"model {args.model}: n = {model.n}, columns = {', '.join(model.selected_columns)}")
    print(f"{'':>6} {'Estimate':>12} {'Std. Error':>12} {'z value':>9}")
    for name, est, se in zip(model.selected_columns, fit.theta_hat, fit.se):
        print(f"{name:>6} {est:12.6f} {se:12.6f} {est / se:9.3f}")
    print(f"Residual deviance: {fit.deviance:.2f} on {model.n - model.dim} degrees of freedom")
    print(f"Newton iterations: {fit.iterations} ({fit.information} information)")
    return 0


def cmd_oracle(args) -> int:
    data = load_pima_csv(args.data)
    spec = QuadratureSpec(points_per_dim=args.points, half_width_sds=args.half_width)
    logs = [quadrature_log_evidence(ProbitModel(data, MODEL_COLUMNS[k]), spec) for k in (0, 1)]
    log_b01 = logs[0] - logs[1]
    print(json.dumps({"log_m0": logs[0], "log_m1": logs[1], "log_b01": log_b01,
                      "b01": math.exp(log_b01)}, indent=2))
    return 0


def cmd_single(args) -> int:
    config = BenchConfig(data_path=args.data, estimators=_estimator_list(args.estimator),
                         n_sims=args.n_sims, replications=1, seed=args.seed)
    ctx = build_context(config)
    for k, (m, f) in enumerate(zip(ctx.models, ctx.fits)):
        print(f"model {k} ({', '.join(m.selected_columns)}): MLE {np.array2string(f.theta_hat, precision=6)}")
    res = run_replication(ctx, args.replication)
    for name in config.estimators:
        log_b01, secs = res[name]
        print(f"{name:>12}: B01 = {math.exp(log_b01):.6f}  (log {log_b01:+.6f}, {secs:.3f} s)")
    return 0


def cmd_chain(args) -> int:
    data = load_pima_csv(args.data)
    model = ProbitModel(data, MODEL_COLUMNS[args.model])
    chain = gibbs_run(model, args.iterations, RngStream.derive(args.seed, "chain", args.model))
    write_chain_csv(chain, args.out)
    print(f"wrote {chain.T} draws to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Bayes factor estimators for the Pima probit benchmark")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="replicated benchmark across estimators")
    r.add_argument("--data", required=True)
    r.add_argument("--estimators", default="all",
                   help=f"comma-separated subset of {', '.join(ESTIMATORS)}, or all")
    r.add_argument("--n-sims", type=int, default=20_000)
    r.add_argument("--replications", type=int, default=100)
    r.add_argument("--seed", type=int, default=42)
    r.add_argument("--format", choices=("json", "csv"), default="json")
    r.add_argument("--out", default="-")
    r.add_argument("--jobs", type=int, default=None, help="worker processes (default $BENCH_JOBS or 1)")
    r.add_argument("--alpha-weights", choices=("equal", "budget"), default="equal")
    r.add_argument("--timings", action="store_true",
                   help="store mean wall times in the output (makes it run-dependent)")
    r.set_defaults(func=cmd_run)

    m = sub.add_parser("mle", help="maximum likelihood fit of model 0 or 1")
    m.add_argument("--data", required=True)
    m.add_argument("--model", type=int, choices=(0, 1), default=1)
    m.add_argument("--information", choices=("expected", "observed"), default="expected")
    m.set_defaults(func=cmd_mle)

    o = sub.add_parser("oracle", help="quadrature Bayes factor for the Pima pair")
    o.add_argument("--data", required=True)
    o.add_argument("--points", type=int, default=101)
    o.add_argument("--half-width", type=float, default=8.0)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("single", help="one verbose replication")
    s.add_argument("--data", required=True)
    s.add_argument("--estimator", default="is")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--n-sims", type=int, default=20_000)
    s.add_argument("--replication", type=int, default=0)
    s.set_defaults(func=cmd_single)

    c = sub.add_parser("chain", help="dump a Gibbs chain as CSV")
    c.add_argument("--data", required=True)
    c.add_argument("--model", type=int, choices=(0, 1), default=1)
    c.add_argument("--iterations", type=int, default=20_000)
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_chain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
