"""Evidence and Bayes factor estimators.

Every estimator works on log-scale terms and averages them with logsumexp.
The models are duck-typed: anything with ``dim``, ``prior`` and vectorised
``log_likelihood`` / ``log_prior`` / ``log_posterior_unnorm`` works, which
is how the closed-form toy models in :mod:`probit_evidence.toy` plug in.

Each result carries ``se``, a 20-batch-means standard error on the log scale
(contiguous batches, so chain autocorrelation is absorbed for long chains).

Embedded pairs follow one convention: model 1's parameter is (theta, psi)
with psi its last coordinate, and model 0 is model 1 at psi = 0.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gibbs import Chain, chain_log_posterior, rao_blackwell_logdensity
from .kernels import GaussianSpec, RngStream, logsumexp
from .model import ConditionalGaussian

N_BATCHES = 20
HEAVY_TAIL_NATS = 20.0


class HeavyTailWarning(UserWarning):
    """Harmonic-mean weights look heavy tailed (phi may have fatter tails than the posterior)."""


@dataclass(frozen=True)
class LogEvidence:
    value: float
    n_sims: int
    method: str
    wall_time: float = 0.0
    se: float = math.nan

    def __post_init__(self):
        if self.n_sims < 1:
            raise ValueError("n_sims must be >= 1")


@dataclass(frozen=True)
class BayesFactorEstimate:
    log_b01: float
    method: str
    n_sims: tuple[int, ...]
    wall_time: float = 0.0
    se: float = math.nan
    converged: bool = True
    iterations: int = 0

    @property
    def b01(self) -> float:
        return math.exp(self.log_b01)


def bayes_factor(e0: LogEvidence, e1: LogEvidence) -> BayesFactorEstimate:
    """Combine two evidence estimates into log B01 = log m0 - log m1."""
    return BayesFactorEstimate(
        log_b01=e0.value - e1.value,
        method=e0.method,
        n_sims=(e0.n_sims, e1.n_sims),
        wall_time=e0.wall_time + e1.wall_time,
        se=math.hypot(e0.se, e1.se),
    )


def log_mean_exp(terms) -> float:
    terms = np.asarray(terms)
    return logsumexp(terms) - math.log(terms.size)


def batch_se(stat: Callable[..., float], *arrays, n_batches: int = N_BATCHES) -> float:
    """Batch-means SE of ``stat`` applied to aligned contiguous batches."""
    if min(len(a) for a in arrays) < 2 * n_batches:
        return math.nan
    splits = [np.array_split(np.asarray(a), n_batches) for a in arrays]
    vals = np.array([stat(*parts) for parts in zip(*splits)])
    return float(np.std(vals, ddof=1) / math.sqrt(n_batches))


# --------------------------------------------------------------------------
# Single-model evidence estimators


def crude_mc_evidence(model, n: int, rng: RngStream) -> LogEvidence:
    """Average the likelihood over prior draws."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    draws = model.prior.sample(rng, n)
    terms = np.atleast_1d(model.log_likelihood(draws))
    value = log_mean_exp(terms)
    return LogEvidence(value, n, "crude_mc", time.perf_counter() - t0, batch_se(log_mean_exp, terms))


def importance_evidence(model, proposal: GaussianSpec, n: int, rng: RngStream) -> LogEvidence:
    if proposal.dim != model.dim:
        raise ValueError(f"proposal dimension {proposal.dim} != model dimension {model.dim}")
    if n < 1:
        raise ValueError("n must be >= 1")
    t0 = time.perf_counter()
    draws = proposal.sample(rng, n)
    terms = model.log_likelihood(draws) + model.log_prior(draws) - proposal.logpdf(draws)
    terms = np.atleast_1d(terms)
    value = log_mean_exp(terms)
    return LogEvidence(value, n, "importance", time.perf_counter() - t0, batch_se(log_mean_exp, terms))


def harmonic_tail_gap(log_weights) -> float:
    """max minus mean of the reciprocal-importance log-weights."""
    w = np.asarray(log_weights)
    return float(np.max(w) - np.mean(w))


def harmonic_evidence(model, chain: Chain, phi: GaussianSpec) -> LogEvidence:
    """Reciprocal importance sampling over posterior draws.

    ``phi`` must have lighter tails than the posterior for finite variance;
    this is not checked, but a large spread in the log-weights raises a
    :class:`HeavyTailWarning`.
    """
    if phi.dim != model.dim or chain.dim != model.dim:
        raise ValueError("phi, chain and model dimensions must agree")
    t0 = time.perf_counter()
    w = np.atleast_1d(phi.logpdf(chain.theta_draws)) - chain_log_posterior(model, chain)
    gap = harmonic_tail_gap(w)
    if gap > HEAVY_TAIL_NATS:
        warnings.warn(
            f"harmonic-mean log-weights span {gap:.1f} nats above their mean",
            HeavyTailWarning,
            stacklevel=2,
        )
    value = -log_mean_exp(w)
    se = batch_se(lambda b: -log_mean_exp(b), w)
    return LogEvidence(value, chain.T, "harmonic", time.perf_counter() - t0, se)


def chib_evidence(model, chain: Chain) -> LogEvidence:
    """log f(theta*) + log prior(theta*) - log pi_hat(theta* | y)."""
    t0 = time.perf_counter()
    rb = rao_blackwell_logdensity(chain)
    theta_star = np.asarray(chain.meta["theta_star"], dtype=float)
    value = float(model.log_likelihood(theta_star) + model.log_prior(theta_star) - rb)
    se = batch_se(log_mean_exp, chain.rb_logdensities)
    return LogEvidence(value, chain.T, "chib", time.perf_counter() - t0, se)


# --------------------------------------------------------------------------
# Two-model estimators


def bridge_same_space_bf(model0, model1, chain1: Chain, n: int | None = None) -> BayesFactorEstimate:
    """Average of the unnormalised posterior ratio over model-1 posterior draws."""
    if model0.dim != model1.dim:
        raise ValueError(
            f"same-space bridge needs equal dimensions, got {model0.dim} and {model1.dim}"
        )
    t0 = time.perf_counter()
    terms = chain_log_posterior(model0, chain1) - chain_log_posterior(model1, chain1)
    if n is not None:
        terms = terms[:n]
    return BayesFactorEstimate(
        log_b01=log_mean_exp(terms),
        method="bridge_same_space",
        n_sims=(terms.size,),
        wall_time=time.perf_counter() - t0,
        se=batch_se(log_mean_exp, terms),
    )


def check_embedded(model0, model1) -> None:
    if model1.dim != model0.dim + 1:
        raise ValueError(
            f"model 0 (p={model0.dim}) is not embedded in model 1 (p={model1.dim}) "
            "as model 1 minus its last coordinate"
        )
    X0, X1 = getattr(model0, "X", None), getattr(model1, "X", None)
    if X0 is not None and X1 is not None:
        if X0.shape[0] != X1.shape[0] or not np.array_equal(X0, X1[:, :-1]):
            raise ValueError("model 0's design is not model 1's design minus its last column")
    for attr in ("y", "z"):
        a, b = getattr(model0, attr, None), getattr(model1, attr, None)
        if a is not None and b is not None and not np.array_equal(a, b):
            raise ValueError("the two models are fitted to different responses")


def complete_draws(chain0: Chain, omega: ConditionalGaussian, rng: RngStream) -> np.ndarray:
    """Append psi ~ omega(. | theta) to each model-0 draw."""
    theta = chain0.theta_draws
    return np.column_stack([theta, omega.sample(theta, rng)])


def completed_log_densities(model0, model1, omega: ConditionalGaussian, points):
    """(log p0~, log p1~) at points (theta, psi) on model 1's space.

    p0~ = f0(theta) pi0(theta) omega(psi | theta) and p1~ = f1(theta, psi) pi1(theta, psi).
    """
    points = np.atleast_2d(points)
    theta, psi = points[:, :-1], points[:, -1]
    lp0 = model0.log_posterior_unnorm(theta) + omega.logpdf(psi, theta)
    lp1 = model1.log_posterior_unnorm(points)
    return np.atleast_1d(lp0), np.atleast_1d(lp1)


def _densities_on_chain1(model0, model1, omega, chain1: Chain):
    pts = chain1.theta_draws
    lp0 = chain_log_posterior(model0, chain1, drop_last=True) + omega.logpdf(pts[:, -1], pts[:, :-1])
    return lp0, chain_log_posterior(model1, chain1)


def _densities_on_completed(model0, model1, omega, chain0: Chain, psi):
    theta = chain0.theta_draws
    lp0 = chain_log_posterior(model0, chain0) + omega.logpdf(psi, theta)
    lp1 = np.atleast_1d(model1.log_posterior_unnorm(np.column_stack([theta, psi])))
    return lp0, lp1


class AlphaChoice:
    """Strictly positive bridge function on model 1's space, in log form."""

    def log_alpha(self, points) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantAlpha(AlphaChoice):
    log_value: float = 0.0

    def log_alpha(self, points) -> np.ndarray:
        return np.full(np.atleast_2d(points).shape[0], self.log_value)


@dataclass(frozen=True)
class GaussianMixtureAlpha(AlphaChoice):
    """1 / (w1 q1(theta, psi) + w0 q0(theta) omega(psi | theta)), times exp(log_scale)."""

    gauss0: GaussianSpec
    gauss1: GaussianSpec
    omega: ConditionalGaussian
    weights: tuple[float, float] = (0.5, 0.5)
    log_scale: float = 0.0

    def log_alpha(self, points) -> np.ndarray:
        points = np.atleast_2d(points)
        theta, psi = points[:, :-1], points[:, -1]
        w0, w1 = self.weights
        a = math.log(w1) + self.gauss1.logpdf(points)
        b = math.log(w0) + self.gauss0.logpdf(theta) + self.omega.logpdf(psi, theta)
        return self.log_scale - np.logaddexp(a, b)

    def scaled(self, c: float) -> GaussianMixtureAlpha:
        return GaussianMixtureAlpha(self.gauss0, self.gauss1, self.omega, self.weights,
                                    self.log_scale + math.log(c))


def make_mixture_alpha(
    gauss0: GaussianSpec,
    gauss1: GaussianSpec,
    omega: ConditionalGaussian,
    weights: str | Sequence[float] = "equal",
    budgets: tuple[int, int] | None = None,
) -> GaussianMixtureAlpha:
    """Bridge function built from the asymptotic Gaussians of both models.

    ``weights="equal"`` averages the two Gaussian approximations with weight
    1/2 each; ``weights="budget"`` uses n0/(n0+n1) and n1/(n0+n1) from
    ``budgets``; an explicit (w0, w1) pair is also accepted.
    """
    if gauss1.dim != gauss0.dim + 1 or omega.slope.shape != (gauss0.dim,):
        raise ValueError("expected gauss0 of dim p, gauss1 of dim p+1 and omega conditioning on p values")
    if isinstance(weights, str):
        if weights == "equal":
            w = (0.5, 0.5)
        elif weights == "budget":
            if budgets is None:
                raise ValueError("weights='budget' needs budgets=(n0, n1)")
            n0, n1 = budgets
            w = (n0 / (n0 + n1), n1 / (n0 + n1))
        else:
            raise ValueError(f"unknown weights {weights!r}")
    else:
        w = tuple(float(v) for v in weights)
    if len(w) != 2 or min(w) <= 0:
        raise ValueError("weights must be two positive numbers")
    return GaussianMixtureAlpha(gauss0, gauss1, omega, w)


def _bridge_ratio(num_terms, den_terms) -> float:
    return log_mean_exp(num_terms) - log_mean_exp(den_terms)


def bridge_extended_bf(
    model0,
    model1,
    omega: ConditionalGaussian,
    chain0: Chain,
    chain1: Chain,
    alpha: AlphaChoice,
    rng: RngStream,
) -> BayesFactorEstimate:
    """Bridge sampling between embedded models via a pseudo-posterior completion.

    The numerator averages p0~ alpha over model-1 posterior draws; the
    denominator averages p1~ alpha over model-0 draws completed with psi ~ omega.
    """
    check_embedded(model0, model1)
    t0 = time.perf_counter()
    pts0 = complete_draws(chain0, omega, rng)
    lp0_at1, _ = _densities_on_chain1(model0, model1, omega, chain1)
    _, lp1_at0 = _densities_on_completed(model0, model1, omega, chain0, pts0[:, -1])
    num = lp0_at1 + alpha.log_alpha(chain1.theta_draws)
    den = lp1_at0 + alpha.log_alpha(pts0)
    return BayesFactorEstimate(
        log_b01=_bridge_ratio(num, den),
        method="bridge",
        n_sims=(chain0.T, chain1.T),
        wall_time=time.perf_counter() - t0,
        se=batch_se(_bridge_ratio, num, den),
    )


def _optimal_iterate(l0, l1, r, iterations, tol):
    """Fixed-point iteration for log B01 given log(p0~/p1~) on both samples.

    l1: log ratio at model-1 draws; l0: log ratio at completed model-0 draws.
    """
    log_n0, log_n1 = math.log(l0.size), math.log(l1.size)
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        num = log_mean_exp(l1 - np.logaddexp(log_n0 + l1, log_n1 + r))
        den = log_mean_exp(-np.logaddexp(log_n0 + l0, log_n1 + r))
        r_new = num - den
        delta = abs(r_new - r)
        r = r_new
        if delta < tol:
            converged = True
            break
    return r, converged, it


def optimal_alpha_bridge_bf(
    model0,
    model1,
    omega: ConditionalGaussian,
    chain0: Chain,
    chain1: Chain,
    rng: RngStream,
    iterations: int = 200,
    initial_log_b01: float = 0.0,
    tol: float = 1e-8,
) -> BayesFactorEstimate:
    """Bridge sampling with the iterated quasi-optimal bridge function.

    With the current estimate B, alpha is proportional to
    1 / (n0 p0~ + n1 B p1~); the estimate is refreshed until successive
    log values differ by less than ``tol``. On non-convergence the last
    iterate is returned with ``converged=False``.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    check_embedded(model0, model1)
    t0 = time.perf_counter()
    psi = omega.sample(chain0.theta_draws, rng)
    a, b = _densities_on_chain1(model0, model1, omega, chain1)
    l1 = a - b
    a, b = _densities_on_completed(model0, model1, omega, chain0, psi)
    l0 = a - b
    r, converged, it = _optimal_iterate(l0, l1, float(initial_log_b01), iterations, tol)
    se = batch_se(lambda x0, x1: _optimal_iterate(x0, x1, r, iterations, tol)[0], l0, l1)
    return BayesFactorEstimate(
        log_b01=r,
        method="bridge_opt",
        n_sims=(chain0.T, chain1.T),
        wall_time=time.perf_counter() - t0,
        se=se,
        converged=converged,
        iterations=it,
    )


def pseudo_prior_ratio_bf(
    model0,
    model1,
    omega: ConditionalGaussian,
    chain0: Chain,
    rng: RngStream,
    n: int | None = None,
) -> BayesFactorEstimate:
    """Bayes factor from the mean model-0 to model-1 move ratio.

    Under pi0(theta | y) omega(psi | theta) the ratio p1~ / p0~ has
    expectation m1 / m0, so its log-mean is -log B01.
    """
    check_embedded(model0, model1)
    t0 = time.perf_counter()
    psi = omega.sample(chain0.theta_draws, rng)
    lp0, lp1 = _densities_on_completed(model0, model1, omega, chain0, psi)
    terms = lp1 - lp0
    if n is not None:
        terms = terms[:n]
    return BayesFactorEstimate(
        log_b01=-log_mean_exp(terms),
        method="pseudo_ratio",
        n_sims=(terms.size,),
        wall_time=time.perf_counter() - t0,
        se=batch_se(log_mean_exp, terms),
    )
