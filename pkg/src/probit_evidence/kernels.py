"""Probability primitives used throughout the package.

Everything density-related lives on the log scale. The normal CDF comes from
``scipy.special.ndtr``; its logarithm and the one-sided truncated normal
sampler are compiled kernels. The sampler draws from a numpy ``Generator`` so
results follow the caller's stream exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import special
from scipy.linalg import lapack, solve_triangular

from .errors import DomainError, FactorizationError

LOG_2PI = math.log(2.0 * math.pi)
_HALF_LOG_2PI = 0.5 * LOG_2PI
_RSQRT2 = 1.0 / math.sqrt(2.0)

# Below this standardized truncation point plain rejection from N(0, 1) accepts
# with probability >= 0.31; above it the translated-exponential proposal is used.
TAIL_SWITCH = 0.5


def _check_finite(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("normal CDF requires finite input")
    return arr


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays of finite values."""
    arr = _check_finite(x)
    out = special.ndtr(arr)
    return float(out) if out.ndim == 0 else out


@njit(cache=True)
def log_ndtr(x):
    """Scalar log Phi(x) for finite x.

    erfc carries full relative precision down to x = -30; beyond that the
    asymptotic Mills-ratio series (five terms, truncation error below 2e-12
    in the log factor) takes over, so the result never underflows.
    """
    if x >= 0.0:
        return math.log1p(-0.5 * math.erfc(x * _RSQRT2))
    if x > -30.0:
        return math.log(0.5 * math.erfc(-x * _RSQRT2))
    r = 1.0 / (x * x)
    series = r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 - 945.0 * r))))
    return -0.5 * x * x - math.log(-x) - _HALF_LOG_2PI + math.log1p(series)


@njit(cache=True)
def _log_ndtr_vec(x, out):
    for i in range(x.size):
        out[i] = log_ndtr(x[i])
    return out


def std_normal_logcdf(x):
    """log Phi(x), finite for every finite x (scalar or array)."""
    arr = _check_finite(x)
    flat = np.ascontiguousarray(arr.ravel())
    out = _log_ndtr_vec(flat, np.empty_like(flat)).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def std_normal_logpdf(x):
    return -0.5 * LOG_2PI - 0.5 * np.square(x)


def logsumexp(v) -> float:
    arr = np.asarray(v, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError("logsumexp of an empty vector")
    m = np.max(arr)
    if not np.isfinite(m):
        # all -inf, or a +inf/nan present
        return float(m) if m != -np.inf else -np.inf
    return float(m + np.log(np.sum(np.exp(arr - m))))


# --------------------------------------------------------------------------
# SPD factorization and Gaussian specifications


@dataclass(frozen=True)
class SpdFactor:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""

    dim: int
    lower_factor: np.ndarray
    log_det: float

    def matrix(self) -> np.ndarray:
        return self.lower_factor @ self.lower_factor.T

    def whiten(self, v: np.ndarray) -> np.ndarray:
        """Solve L w = v for w; ``v`` may be (dim,) or (N, dim)."""
        v = np.asarray(v, dtype=float)
        if v.ndim == 1:
            return solve_triangular(self.lower_factor, v, lower=True)
        return solve_triangular(self.lower_factor, v.T, lower=True).T

    def solve(self, v: np.ndarray) -> np.ndarray:
        """Solve (L L^T) x = v."""
        w = solve_triangular(self.lower_factor, v, lower=True)
        return solve_triangular(self.lower_factor.T, w, lower=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.dim))


def spd_factorize(m) -> SpdFactor:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("matrix is not symmetric")
    lower, info = lapack.dpotrf(m, lower=1, clean=1)
    if info > 0:
        raise FactorizationError(int(info))
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    diag = np.diag(lower)
    if np.any(diag <= 0):
        raise FactorizationError(int(np.argmax(diag <= 0)) + 1)
    return SpdFactor(dim=m.shape[0], lower_factor=lower, log_det=2.0 * float(np.sum(np.log(diag))))


@dataclass(frozen=True)
class GaussianSpec:
    mean: np.ndarray
    cov_factor: SpdFactor

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "mean", mean)
        if mean.shape != (self.cov_factor.dim,):
            raise ValueError(
                f"mean has shape {mean.shape}, covariance has dim {self.cov_factor.dim}"
            )

    @classmethod
    def from_cov(cls, mean, cov) -> GaussianSpec:
        return cls(np.asarray(mean, dtype=float), spd_factorize(cov))

    @property
    def dim(self) -> int:
        return self.cov_factor.dim

    @property
    def cov(self) -> np.ndarray:
        return self.cov_factor.matrix()

    def logpdf(self, x) -> np.ndarray | float:
        return mvn_logpdf(x, self)

    def sample(self, rng: RngStream, size: int | None = None) -> np.ndarray:
        return mvn_sample(self, rng, size)


def mvn_logpdf(x, spec: GaussianSpec):
    """Log-density of N(mean, L L^T) at ``x`` of shape (d,) or (N, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim or x.ndim > 2:
        raise ValueError(f"point of shape {x.shape} does not match dimension {spec.dim}")
    w = spec.cov_factor.whiten(x - spec.mean)
    quad = np.sum(w * w, axis=-1)
    out = -0.5 * (spec.dim * LOG_2PI + spec.cov_factor.log_det + quad)
    return float(out) if np.ndim(out) == 0 else out


def mvn_sample(spec: GaussianSpec, rng: RngStream, size: int | None = None) -> np.ndarray:
    """mean + L eps, eps iid N(0, 1). Returns (d,) or (size, d)."""
    if size is None:
        eps = rng.generator.standard_normal(spec.dim)
        return spec.mean + spec.cov_factor.lower_factor @ eps
    eps = rng.generator.standard_normal((size, spec.dim))
    return spec.mean + eps @ spec.cov_factor.lower_factor.T


# --------------------------------------------------------------------------
# Random streams


def stream_id_for(*labels) -> int:
    """64-bit stream id of a label tuple.

    The id is the first 8 bytes (little endian) of the BLAKE2b digest of the
    labels joined with ``"|"`` after ``str()``; e.g. ``stream_id_for(3, "is", 1)``
    hashes the bytes ``b"3|is|1"``. Unlike ``hash()`` this is stable across
    processes and interpreter runs.
    """
    key = "|".join(str(label) for label in labels).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")


@dataclass
class RngStream:
    """A Philox generator keyed by (master seed, stream id).

    Streams are single-owner: share the seed and id, not the object.
    """

    stream_id: int
    master_seed: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        seq = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.Philox(seq))

    @classmethod
    def derive(cls, master_seed: int, *labels) -> RngStream:
        return cls(stream_id=stream_id_for(*labels), master_seed=master_seed)


# --------------------------------------------------------------------------
# One-sided truncated normal


@njit(cache=True)
def _std_normal_above(a, gen):
    """One draw of u ~ N(0, 1) conditioned on u > a."""
    if a < TAIL_SWITCH:
        while True:
            u = gen.standard_normal()
            if u > a:
                return u
    # translated exponential proposal with the optimal rate
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        u = a + gen.standard_exponential() / lam
        d = u - lam
        if u > a and gen.random() <= math.exp(-0.5 * d * d):
            return u


@njit(cache=True)
def _truncated_normal(mu, sigma, positive, gen):
    """N(mu, sigma^2) conditioned on z > 0 (positive) or z <= 0."""
    if positive:
        a = -mu / sigma
        while True:
            z = mu + sigma * _std_normal_above(a, gen)
            if z > 0.0:
                return z
    a = mu / sigma
    while True:
        z = mu - sigma * _std_normal_above(a, gen)
        if z <= 0.0:
            return z


@njit(cache=True)
def _truncated_normal_vec(mu, sigma, positive, gen, out):
    for i in range(mu.shape[0]):
        out[i] = _truncated_normal(mu[i], sigma, positive[i], gen)
    return out


_SIDES = {"right_of_zero": True, "left_of_zero": False}


def truncated_normal_sample(mu: float, sigma: float, side: str, rng: RngStream) -> float:
    """Draw from N(mu, sigma^2) restricted to (0, inf) or (-inf, 0].

    ``side`` is ``"right_of_zero"`` (strictly positive result) or
    ``"left_of_zero"`` (non-positive result). Acceptance stays bounded away
    from zero for any ``mu``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    try:
        positive = _SIDES[side]
    except KeyError:
        raise ValueError(f"side must be one of {sorted(_SIDES)}, got {side!r}") from None
    return float(_truncated_normal(float(mu), float(sigma), positive, rng.generator))


def truncated_normal_array(mu, positive, rng: RngStream, sigma: float = 1.0) -> np.ndarray:
    """Vectorised form: element i is positive iff ``positive[i]``."""
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    positive = np.ascontiguousarray(positive, dtype=np.bool_)
    if mu.shape != positive.shape or mu.ndim != 1:
        raise ValueError("mu and positive must be 1-d arrays of equal length")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    out = np.empty_like(mu)
    return _truncated_normal_vec(mu, float(sigma), positive, rng.generator, out)
