"""Closed-form reference models.

``LinearGaussianModel`` is the probit model's completed form with the latent
vector observed: z ~ N(X theta, I) under the same g-prior. Its posterior and
evidence are Gaussian and known exactly, and its "Gibbs" chain is a sequence
of iid posterior draws whose full conditional equals the posterior.

``FlatLikelihoodModel`` has likelihood identically one, so its evidence is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import Chain
from .kernels import LOG_2PI, GaussianSpec, RngStream, SpdFactor, spd_factorize


@dataclass(frozen=True, eq=False)
class LinearGaussianModel:
    X: np.ndarray
    z: np.ndarray
    g: float = 1.0
    XtX: SpdFactor = field(init=False, repr=False)
    prior: GaussianSpec = field(init=False, repr=False)
    posterior: GaussianSpec = field(init=False, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        z = np.asarray(self.z, dtype=float)
        if z.shape != (X.shape[0],):
            raise ValueError("z must have one entry per row of X")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "XtX", spd_factorize(X.T @ X))
        inv = self.XtX.inverse()
        inv = 0.5 * (inv + inv.T)
        c = self.g / (self.g + 1.0)
        object.__setattr__(self, "prior", GaussianSpec.from_cov(np.zeros(X.shape[1]), self.g * inv))
        object.__setattr__(
            self, "posterior", GaussianSpec.from_cov(c * (inv @ (X.T @ z)), c * inv)
        )

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def log_likelihood(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.z - theta @ self.X.T
        out = -0.5 * self.n * LOG_2PI - 0.5 * np.sum(r * r, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def log_prior(self, theta):
        return self.prior.logpdf(theta)

    def log_posterior_unnorm(self, theta):
        return self.log_likelihood(theta) + self.log_prior(theta)

    def log_evidence(self) -> float:
        """log N(z; 0, I + g H) with H the hat matrix of X."""
        c = self.g / (self.g + 1.0)
        xtz = self.X.T @ self.z
        quad = self.z @ self.z - c * (xtz @ self.XtX.solve(xtz))
        return -0.5 * self.n * LOG_2PI - 0.5 * self.dim * math.log1p(self.g) - 0.5 * quad

    def mle_gaussian(self) -> GaussianSpec:
        inv = self.XtX.inverse()
        return GaussianSpec.from_cov(self.XtX.solve(self.X.T @ self.z), 0.5 * (inv + inv.T))

    def laplace_gaussian(self) -> GaussianSpec:
        return self.posterior

    def fingerprint(self) -> str:
        return f"linear-gaussian-{id(self):x}"


def exact_chain(model: LinearGaussianModel, T: int, rng: RngStream, theta_star=None) -> Chain:
    """iid posterior draws packaged as a chain with exact Rao-Blackwell terms."""
    draws = model.posterior.sample(rng, T)
    means = np.broadcast_to(model.posterior.mean, draws.shape).copy()
    rb = None
    if theta_star is not None:
        rb = np.full(T, model.posterior.logpdf(np.asarray(theta_star, dtype=float)))
    meta = {"seed": rng.master_seed, "stream_id": rng.stream_id, "T": T,
            "theta_star": theta_star, "model": model.fingerprint()}
    return Chain(theta_draws=draws, cond_means=means, rb_logdensities=rb, meta=meta)


@dataclass(frozen=True, eq=False)
class FlatLikelihoodModel:
    prior: GaussianSpec

    @property
    def dim(self) -> int:
        return self.prior.dim

    def log_likelihood(self, theta):
        theta = np.asarray(theta, dtype=float)
        return 0.0 if theta.ndim == 1 else np.zeros(theta.shape[0])

    def log_prior(self, theta):
        return self.prior.logpdf(theta)

    def log_posterior_unnorm(self, theta):
        return self.log_prior(theta)

    def mle_gaussian(self) -> GaussianSpec:
        return self.prior

    def laplace_gaussian(self) -> GaussianSpec:
        return self.prior
