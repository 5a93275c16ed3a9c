"""Replicated Bayes-factor benchmark on the Pima Indian diabetes test set.

Model 0 regresses ``type`` on (glu, bp), model 1 on (glu, bp, ped); neither
has an intercept. Each replication draws from its own random streams, keyed
by (replication, estimator, model), so results do not depend on how many
worker processes run the replications.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, NumericalError, ProbitEvidenceError
from .estimators import (
    BayesFactorEstimate,
    bayes_factor,
    bridge_extended_bf,
    chib_evidence,
    crude_mc_evidence,
    harmonic_evidence,
    importance_evidence,
    make_mixture_alpha,
    optimal_alpha_bridge_bf,
    pseudo_prior_ratio_bf,
)
from .gibbs import gibbs_run
from .kernels import RngStream
from .model import Dataset, MleFit, ProbitModel, asymptotic_gaussian, conditional_gaussian, fit_mle

ESTIMATORS = ("mc", "is", "bridge", "bridge_opt", "harmonic", "chib", "pseudo_ratio")
CHAIN_ESTIMATORS = frozenset({"bridge", "bridge_opt", "harmonic", "chib", "pseudo_ratio"})

PIMA_COLUMNS = ("glu", "bp", "ped")
_YES = {"Yes", "yes", "1"}
_NO = {"No", "no", "0"}


def load_pima_csv(path, columns: Sequence[str] = PIMA_COLUMNS, response: str = "type") -> Dataset:
    """Read a Pima-style CSV; ``type`` in {Yes, yes, 1} codes y = 1."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (*columns, response) if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        y, cols = [], {c: [] for c in columns}
        for row_no, row in enumerate(reader, start=2):
            label = (row[response] or "").strip()
            if label in _YES:
                y.append(1)
            elif label in _NO:
                y.append(0)
            else:
                raise DataError(f"{path}: row {row_no}, column {response!r}: non-binary value {label!r}")
            for c in columns:
                try:
                    cols[c].append(float(row[c]))
                except (TypeError, ValueError):
                    raise DataError(
                        f"{path}: row {row_no}, column {c!r}: cannot parse {row[c]!r}"
                    ) from None
    if not y:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(y), {c: np.array(v) for c, v in cols.items()})


@dataclass
class BenchConfig:
    data_path: str
    estimators: tuple[str, ...] = ("all",)
    n_sims: int = 20_000
    replications: int = 100
    seed: int = 42
    output_format: str = "json"
    output_path: str = "-"
    jobs: int = 1
    model0_columns: tuple[str, ...] = ("glu", "bp")
    model1_columns: tuple[str, ...] = ("glu", "bp", "ped")
    alpha_weights: str = "equal"
    record_timings: bool = False

    def __post_init__(self):
        ests = tuple(self.estimators)
        unknown = [e for e in ests if e not in ESTIMATORS and e != "all"]
        if unknown:
            raise ConfigError(f"unknown estimator(s): {', '.join(unknown)}")
        if not ests:
            raise ConfigError("no estimators requested")
        self.estimators = ESTIMATORS if "all" in ests else tuple(e for e in ESTIMATORS if e in ests)
        if self.n_sims < 100:
            raise ConfigError("n_sims must be >= 100")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.output_format not in ("json", "csv"):
            raise ConfigError("output_format must be json or csv")
        if self.alpha_weights not in ("equal", "budget"):
            raise ConfigError("alpha_weights must be equal or budget")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        self.model0_columns = tuple(self.model0_columns)
        self.model1_columns = tuple(self.model1_columns)
        if self.model1_columns[:-1] != self.model0_columns:
            raise ConfigError("model 1 columns must be model 0 columns plus one trailing column")


@dataclass
class EstimatorSummary:
    median: float
    sd: float | None
    mean_wall_time: float
    estimates: list[float]


@dataclass
class ReplicationSummary:
    config: BenchConfig
    mle: dict
    estimators: dict[str, EstimatorSummary] = field(default_factory=dict)

    def to_json(self) -> str:
        cfg = asdict(self.config)
        cfg.pop("jobs")
        cfg.pop("output_path")
        out = {
            "config": cfg,
            "mle": self.mle,
            "estimators": {
                name: {
                    "median": s.median,
                    "sd": s.sd,
                    "wall_time_mean_s": s.mean_wall_time if self.config.record_timings else None,
                    "estimates": s.estimates,
                }
                for name, s in self.estimators.items()
            },
        }
        return json.dumps(out, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["estimator", "replication", "b01"])
        for name, s in self.estimators.items():
            for r, v in enumerate(s.estimates):
                w.writerow([name, r, repr(v)])
        return buf.getvalue()

    def table(self) -> str:
        """Plain-text summary (median, SD, mean seconds)."""
        names = list(self.estimators)
        rows = [
            ["", *names],
            ["Median", *(f"{self.estimators[n].median:.4f}" for n in names)],
            ["Std. dev.", *("nan" if self.estimators[n].sd is None else f"{self.estimators[n].sd:.4g}"
                            for n in names)],
            ["Seconds", *(f"{self.estimators[n].mean_wall_time:.3f}" for n in names)],
        ]
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join("  ".join(c.rjust(wd) for c, wd in zip(r, widths)) for r in rows)


def summarize(estimates) -> tuple[float, float | None]:
    """Median (mean of the middle pair for even length) and N-1 sample SD."""
    v = np.asarray(estimates, dtype=float)
    if v.size == 0:
        raise ValueError("summarize needs at least one estimate")
    s = np.sort(v)
    k = v.size // 2
    median = float(s[k]) if v.size % 2 else float(0.5 * (s[k - 1] + s[k]))
    sd = float(np.std(v, ddof=1)) if v.size > 1 else None
    return median, sd


# --------------------------------------------------------------------------


@dataclass
class _Context:
    """Everything a replication needs; picklable for worker processes."""

    models: tuple[ProbitModel, ProbitModel]
    fits: tuple[MleFit, MleFit]
    estimators: tuple[str, ...]
    n_sims: int
    seed: int
    alpha_weights: str

    def stream(self, r: int, name: str, k: int) -> RngStream:
        return RngStream.derive(self.seed, r, name, k)


def _fit(model: ProbitModel) -> MleFit:
    try:
        return fit_mle(model)
    except ProbitEvidenceError:
        raise
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"MLE fit failed: {exc}") from exc


def build_context(config: BenchConfig, data: Dataset | None = None) -> _Context:
    data = data if data is not None else load_pima_csv(
        config.data_path, columns=tuple(dict.fromkeys(config.model1_columns))
    )
    m0 = ProbitModel(data, config.model0_columns)
    m1 = ProbitModel(data, config.model1_columns)
    return _Context((m0, m1), (_fit(m0), _fit(m1)), tuple(config.estimators),
                    config.n_sims, int(config.seed), config.alpha_weights)


def run_replication(ctx: _Context, r: int) -> dict[str, tuple[float, float]]:
    """log B01 and wall time per requested estimator for replication ``r``.

    Gibbs chains are run once per model and shared by every chain-based
    estimator; their run time is added to each of those estimators' times.
    """
    m0, m1 = ctx.models
    g0, g1 = (asymptotic_gaussian(f) for f in ctx.fits)
    n = ctx.n_sims
    out: dict[str, tuple[float, float]] = {}

    def record(name: str, est: BayesFactorEstimate, extra: float = 0.0):
        if not math.isfinite(est.log_b01):
            raise NumericalError(f"{name} produced a non-finite estimate")
        out[name] = (est.log_b01, est.wall_time + extra)

    if "mc" in ctx.estimators:
        record("mc", bayes_factor(crude_mc_evidence(m0, n, ctx.stream(r, "mc", 0)),
                                  crude_mc_evidence(m1, n, ctx.stream(r, "mc", 1))))
    if "is" in ctx.estimators:
        record("is", bayes_factor(importance_evidence(m0, g0, n, ctx.stream(r, "is", 0)),
                                  importance_evidence(m1, g1, n, ctx.stream(r, "is", 1))))
    if not CHAIN_ESTIMATORS.intersection(ctx.estimators):
        return out

    t0 = time.perf_counter()
    c0 = gibbs_run(m0, n, ctx.stream(r, "gibbs", 0), theta_star=ctx.fits[0].theta_hat,
                   start=ctx.fits[0].theta_hat)
    c1 = gibbs_run(m1, n, ctx.stream(r, "gibbs", 1), theta_star=ctx.fits[1].theta_hat,
                   start=ctx.fits[1].theta_hat)
    chain_time = time.perf_counter() - t0
    omega = conditional_gaussian(g1, m1.dim - 1)

    if "bridge" in ctx.estimators:
        alpha = make_mixture_alpha(g0, g1, omega, ctx.alpha_weights, budgets=(n, n))
        record("bridge", bridge_extended_bf(m0, m1, omega, c0, c1, alpha,
                                            ctx.stream(r, "bridge", 0)), chain_time)
    if "bridge_opt" in ctx.estimators:
        record("bridge_opt", optimal_alpha_bridge_bf(m0, m1, omega, c0, c1,
                                                     ctx.stream(r, "bridge_opt", 0)), chain_time)
    if "harmonic" in ctx.estimators:
        record("harmonic", bayes_factor(harmonic_evidence(m0, c0, g0),
                                        harmonic_evidence(m1, c1, g1)), chain_time)
    if "chib" in ctx.estimators:
        record("chib", bayes_factor(chib_evidence(m0, c0), chib_evidence(m1, c1)), chain_time)
    if "pseudo_ratio" in ctx.estimators:
        record("pseudo_ratio", pseudo_prior_ratio_bf(m0, m1, omega, c0,
                                                     ctx.stream(r, "pseudo_ratio", 0)), chain_time)
    return out


def _guarded(args):
    ctx, r = args
    try:
        return run_replication(ctx, r)
    except Exception as exc:  # noqa: BLE001 - re-raised with the replication index
        raise NumericalError(f"replication {r} failed: {exc}") from exc


def _mle_record(model: ProbitModel, fit: MleFit) -> dict:
    return {
        "columns": list(model.selected_columns),
        "theta_hat": fit.theta_hat.tolist(),
        "se": fit.se.tolist(),
        "deviance": fit.deviance,
        "iterations": fit.iterations,
    }


def run_benchmark(config: BenchConfig, data: Dataset | None = None) -> ReplicationSummary:
    ctx = build_context(config, data)
    work = [(ctx, r) for r in range(config.replications)]
    if config.jobs == 1:
        results = [_guarded(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_guarded, work))
    summary = ReplicationSummary(
        config=config,
        mle={f"model{k}": _mle_record(m, f) for k, (m, f) in enumerate(zip(ctx.models, ctx.fits))},
    )
    for name in config.estimators:
        b01 = [math.exp(res[name][0]) for res in results]
        med, sd = summarize(b01)
        summary.estimators[name] = EstimatorSummary(
            median=med,
            sd=sd,
            mean_wall_time=float(np.mean([res[name][1] for res in results])),
            estimates=b01,
        )
    return summary


def default_jobs() -> int:
    raw = os.environ.get("BENCH_JOBS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"BENCH_JOBS must be an integer, got {raw!r}") from None
