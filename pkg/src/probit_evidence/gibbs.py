"""Data-augmentation Gibbs sampler for the probit posterior.

One cycle draws the latent utilities z_i from normals truncated to the sign
given by y_i, then draws theta from its Gaussian full conditional

    theta | z ~ N(c (X^T X)^{-1} X^T z, c (X^T X)^{-1}),   c = g / (g + 1).

The full-conditional covariance never changes, so it is factorized once. The
per-iteration conditional means are kept, which is all the Rao-Blackwell
density estimate at a fixed point needs.
"""

from __future__ import annotations

import csv
import weakref
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import NumericalError
from .kernels import GaussianSpec, RngStream, SpdFactor, logsumexp, mvn_logpdf, spd_factorize
from .kernels import _truncated_normal  # compiled scalar kernel
from .model import ProbitModel, fit_mle


@dataclass(frozen=True)
class FullConditional:
    mean: np.ndarray
    cov_factor: SpdFactor

    def as_gaussian(self) -> GaussianSpec:
        return GaussianSpec(self.mean, self.cov_factor)


@dataclass(frozen=True)
class Chain:
    theta_draws: np.ndarray
    cond_means: np.ndarray | None = None
    rb_logdensities: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    # per-model log-posterior evaluations at the draws, shared by estimators
    memo: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def T(self) -> int:
        return self.theta_draws.shape[0]

    @property
    def dim(self) -> int:
        return self.theta_draws.shape[1]


class _Setup:
    """Quantities shared by every iteration for a given model."""

    def __init__(self, model: ProbitModel):
        c = model.g / (model.g + 1.0)
        xtx_inv = model.XtX.inverse()
        cov = c * 0.5 * (xtx_inv + xtx_inv.T)
        self.cov_factor = spd_factorize(cov)
        # maps z to the conditional mean
        self.mean_map = np.ascontiguousarray(c * model.XtX.solve(model.X.T))
        self.X = np.ascontiguousarray(model.X)
        self.positive = np.ascontiguousarray(model.y == 1)


_setups: weakref.WeakKeyDictionary[ProbitModel, _Setup] = weakref.WeakKeyDictionary()


def _setup(model: ProbitModel) -> _Setup:
    s = _setups.get(model)
    if s is None:
        s = _setups[model] = _Setup(model)
    return s


@njit(cache=True)
def _latents(X, theta, positive, gen, out):
    n, p = X.shape
    for i in range(n):
        eta = 0.0
        for k in range(p):
            eta += X[i, k] * theta[k]
        out[i] = _truncated_normal(eta, 1.0, positive[i], gen)
    return out


@njit(cache=True)
def _gibbs_loop(X, positive, mean_map, lower, theta0, T, gen, draws, means):
    n, p = X.shape
    z = np.empty(n)
    theta = theta0.copy()
    for t in range(T):
        _latents(X, theta, positive, gen, z)
        for k in range(p):
            acc = 0.0
            for i in range(n):
                acc += mean_map[k, i] * z[i]
            means[t, k] = acc
        eps = np.empty(p)
        for k in range(p):
            eps[k] = gen.standard_normal()
        for k in range(p):
            acc = means[t, k]
            for j in range(k + 1):
                acc += lower[k, j] * eps[j]
            theta[k] = acc
            draws[t, k] = acc
    return draws


def sample_latents(theta, model: ProbitModel, rng: RngStream) -> np.ndarray:
    theta = np.ascontiguousarray(theta, dtype=float)
    if theta.shape != (model.dim,):
        raise ValueError(f"theta must have shape ({model.dim},)")
    s = _setup(model)
    return _latents(s.X, theta, s.positive, rng.generator, np.empty(model.n))


def theta_full_conditional(z, model: ProbitModel) -> FullConditional:
    z = np.asarray(z, dtype=float)
    if z.shape != (model.n,):
        raise ValueError(f"z must have shape ({model.n},)")
    s = _setup(model)
    return FullConditional(mean=s.mean_map @ z, cov_factor=s.cov_factor)


def gibbs_run(
    model: ProbitModel,
    T: int,
    rng: RngStream,
    theta_star=None,
    start=None,
) -> Chain:
    """Run T Gibbs cycles from the MLE (or ``start``), keeping every draw.

    No burn-in is discarded. When ``theta_star`` is given, the log full
    conditional density at that point is recorded for every iteration.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if start is None:
        start = fit_mle(model).theta_hat
    start = np.ascontiguousarray(start, dtype=float)
    s = _setup(model)
    draws = np.empty((T, model.dim))
    means = np.empty((T, model.dim))
    _gibbs_loop(s.X, s.positive, s.mean_map, s.cov_factor.lower_factor, start, T,
                rng.generator, draws, means)
    rb = None
    if theta_star is not None:
        theta_star = np.asarray(theta_star, dtype=float)
        rb = rb_log_terms(theta_star, means, s.cov_factor)
    meta = {
        "seed": rng.master_seed,
        "stream_id": rng.stream_id,
        "T": T,
        "start": start.copy(),
        "theta_star": None if theta_star is None else theta_star.copy(),
        "model": model.fingerprint(),
    }
    return Chain(theta_draws=draws, cond_means=means, rb_logdensities=rb, meta=meta)


def rb_log_terms(theta_star, means, cov_factor: SpdFactor) -> np.ndarray:
    """log N(theta_star; m_t, Sigma) for each conditional mean m_t."""
    # logpdf is symmetric in (x, mean), so evaluate the draws-as-points form
    return mvn_logpdf(np.asarray(means), GaussianSpec(theta_star, cov_factor))


def rao_blackwell_logdensity(chain: Chain) -> float:
    if chain.rb_logdensities is None:
        raise NumericalError("chain was run without a registered theta_star")
    return logsumexp(chain.rb_logdensities) - np.log(chain.rb_logdensities.size)


def chain_log_posterior(model, chain: Chain, drop_last: bool = False) -> np.ndarray:
    """Unnormalised log posterior of ``model`` at every draw (memoised on the chain).

    ``drop_last`` evaluates at the draws minus their final coordinate, i.e. a
    model-1 chain seen through an embedded model 0.
    """
    key = (model, drop_last)
    hit = chain.memo.get(key)
    if hit is None:
        pts = chain.theta_draws[:, :-1] if drop_last else chain.theta_draws
        hit = chain.memo[key] = np.atleast_1d(model.log_posterior_unnorm(pts))
    return hit


def write_chain_csv(chain: Chain, path) -> None:
    """Write ``iter,theta_1,...,theta_p`` then one row per draw."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter"] + [f"theta_{k + 1}" for k in range(chain.dim)])
        for t, row in enumerate(chain.theta_draws, start=1):
            w.writerow([t] + [repr(float(v)) for v in row])


def read_chain_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1:]
