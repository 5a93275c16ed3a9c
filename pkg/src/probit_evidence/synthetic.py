"""Small pinned probit datasets with quadrature-computable evidences.

Drawn once from a probit model with a seeded generator (covariates rounded to
two decimals) and frozen here, so results never depend on a generator
version. All three are non-separable, so the MLE exists.

    tiny   n = 6,  p = 1   column x1
    small  n = 20, p = 1   column x1
    pair   n = 20, p = 2   columns x1, x2 (model {x1} is embedded in {x1, x2})

:func:`oracle_checks` runs every estimator on them against quadrature.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .estimators import (
    HeavyTailWarning,
    bridge_extended_bf,
    bridge_same_space_bf,
    chib_evidence,
    crude_mc_evidence,
    harmonic_evidence,
    importance_evidence,
    make_mixture_alpha,
    optimal_alpha_bridge_bf,
    pseudo_prior_ratio_bf,
)
from .gibbs import Chain, gibbs_run
from .kernels import RngStream
from .model import Dataset, ProbitModel, conditional_gaussian
from .oracle import quadrature_log_evidence

_TINY_X1 = [1.03, 1.64, 1.15, -0.97, -1.39, 0.07]
_TINY_Y = [1, 1, 1, 0, 0, 0]

_SMALL_X1 = [-1.11, 1.48, 0.05, 0.81, -1.38, -0.44, -1.29, -0.78, 0.9, -1.48,
             -0.53, 0.16, -0.67, -0.25, -0.22, 0.42, -0.43, 0.27, 0.06, 0.42]
_SMALL_Y = [0, 1, 0, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 0, 1, 1, 1]

_PAIR_X = [[0.02, 1.34], [1.27, 0.71], [-0.87, -0.05], [0.6, -0.21], [-0.61, -0.77],
           [-0.63, -0.67], [-0.45, 1.15], [-0.8, 0.89], [0.42, 0.14], [-0.83, -0.46],
           [1.97, 0.1], [0.54, 0.66], [1.06, -0.24], [-0.61, -0.06], [-0.26, 0.79],
           [0.19, 0.24], [0.15, 1.23], [-0.54, -0.48], [0.89, -0.11], [0.36, -0.73]]
_PAIR_Y = [0, 1, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0, 1, 0, 1, 0, 0, 0, 1, 0]


def tiny() -> Dataset:
    return Dataset(np.array(_TINY_Y), {"x1": np.array(_TINY_X1)})


def small() -> Dataset:
    return Dataset(np.array(_SMALL_Y), {"x1": np.array(_SMALL_X1)})


def pair() -> Dataset:
    x = np.array(_PAIR_X)
    return Dataset(np.array(_PAIR_Y), {"x1": x[:, 0], "x2": x[:, 1]})


DATASETS = {"tiny": tiny, "small": small, "pair": pair}


# --------------------------------------------------------------------------
# Every estimator against quadrature on the pinned datasets

SINGLE = ("mc", "is", "harmonic", "chib")
PAIRED = ("bridge", "bridge_opt", "pseudo_ratio")


@dataclass(frozen=True)
class OracleCheck:
    instance: str
    estimator: str
    estimate: float  # log evidence, or log B01 for two-model estimators
    se: float
    oracle: float

    @property
    def error(self) -> float:
        return self.estimate - self.oracle

    @property
    def z(self) -> float:
        return self.error / self.se


def _models():
    t, s, p = tiny(), small(), pair()
    return {
        "tiny": ProbitModel(t, ("x1",)),
        "tiny/g2n": ProbitModel(t, ("x1",), g=2.0 * t.n),
        "small": ProbitModel(s, ("x1",)),
        "small/g2n": ProbitModel(s, ("x1",), g=2.0 * s.n),
        "pair/x1": ProbitModel(p, ("x1",)),
        "pair/x2": ProbitModel(p, ("x2",)),
        "pair/x1x2": ProbitModel(p, ("x1", "x2")),
    }


@lru_cache(maxsize=None)
def oracle_log_evidences() -> dict[str, float]:
    return {k: quadrature_log_evidence(m) for k, m in _models().items()}


def _single(name, model, n, stream) -> tuple[list[OracleCheck], Chain]:
    """MC, IS, harmonic mean and Chib on one model.

    IS takes the MLE Gaussian (heavier tails than the posterior, as IS needs);
    the harmonic mean takes the Laplace Gaussian (lighter tails, as it needs).
    On the n = 6 set the two differ by a factor of four in scale.
    """
    oracle = oracle_log_evidences()[name]
    lap = model.laplace_gaussian()
    chain = gibbs_run(model, n, stream("gibbs"), theta_star=lap.mean)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HeavyTailWarning)
        ests = {
            "mc": crude_mc_evidence(model, n, stream("mc")),
            "is": importance_evidence(model, model.mle_gaussian(), n, stream("is")),
            "harmonic": harmonic_evidence(model, chain, lap),
            "chib": chib_evidence(model, chain),
        }
    return [OracleCheck(name, k, e.value, e.se, oracle) for k, e in ests.items()], chain


ALL = SINGLE + ("bridge_same_space",) + PAIRED


def oracle_checks(seed: int, n: int, estimators=ALL, replication: int = 0) -> list[OracleCheck]:
    """Run the requested estimators with budget ``n`` on every instance.

    Single-model estimators are checked on each model's log evidence. The
    same-space bridge compares g = 2n against g = n on the two p = 1 sets and
    the x1 and x2 models of the pair set. The x1-vs-x2 bridge samples the x2
    posterior: weighting x1 draws towards x2 has infinite variance here (the
    x2 posterior is twice as heavy in the tail as x1 can carry). The embedded-pair estimators compare
    {x1} against {x1, x2}, completing with the conditional of the model-1
    MLE Gaussian.
    """
    models = _models()
    oracles = oracle_log_evidences()
    wanted = set(estimators)
    out: list[OracleCheck] = []
    chains: dict[str, Chain] = {}

    def stream(inst):
        return lambda label: RngStream.derive(seed, inst, label, n, replication)

    for inst in ("tiny", "small", "pair/x1", "pair/x2", "pair/x1x2"):
        checks, chains[inst] = _single(inst, models[inst], n, stream(inst))
        out.extend(c for c in checks if c.estimator in wanted)

    if "bridge_same_space" in wanted:
        for m0, m1 in (("tiny/g2n", "tiny"), ("small/g2n", "small"), ("pair/x1", "pair/x2")):
            est = bridge_same_space_bf(models[m0], models[m1], chains[m1])
            out.append(OracleCheck(f"{m0} vs {m1}", "bridge_same_space", est.log_b01, est.se,
                                   oracles[m0] - oracles[m1]))

    paired = wanted.intersection(PAIRED)
    if paired:
        m0, m1 = models["pair/x1"], models["pair/x1x2"]
        c0, c1 = chains["pair/x1"], chains["pair/x1x2"]
        g0, g1 = m0.mle_gaussian(), m1.mle_gaussian()
        omega = conditional_gaussian(g1, 1)
        s = stream("pair/embedded")
        exact = oracles["pair/x1"] - oracles["pair/x1x2"]
        ests = []
        if "bridge" in paired:
            ests.append(bridge_extended_bf(m0, m1, omega, c0, c1, make_mixture_alpha(g0, g1, omega), s("bridge")))
        if "bridge_opt" in paired:
            ests.append(optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, s("bridge_opt")))
        if "pseudo_ratio" in paired:
            ests.append(pseudo_prior_ratio_bf(m0, m1, omega, c0, s("pseudo_ratio")))
        for e in ests:
            out.append(OracleCheck("pair/x1 vs pair/x1x2", e.method, e.log_b01, e.se, exact))
    return out


def error_slopes(seed: int, budgets=tuple(4**k for k in range(5, 10)), replications: int = 20,
                 estimators=ALL) -> dict[tuple[str, str], tuple[float, np.ndarray]]:
    """Log-log slope of RMSE against budget for every (instance, estimator).

    Each budget gets ``replications`` independent runs; the RMSE is taken
    against the quadrature value. Returns {key: (slope, rmse per budget)}.
    """
    errors: dict[tuple[str, str], np.ndarray] = {}
    for j, n in enumerate(budgets):
        for r in range(replications):
            for c in oracle_checks(seed, n, estimators, replication=r):
                errors.setdefault((c.instance, c.estimator), np.zeros((len(budgets), replications)))[j, r] = c.error
    log_n = np.log(np.asarray(budgets, dtype=float))
    out = {}
    for key, e in errors.items():
        rmse = np.sqrt(np.mean(e**2, axis=1))
        out[key] = (float(np.polyfit(log_n, np.log(rmse), 1)[0]), rmse)
    return out
