"""Bayesian probit regression with a g-prior (no intercept).

The prior on the coefficient vector is N(0, g (X^T X)^{-1}) with g defaulting
to the number of observations. All evaluations accept a single parameter
vector of shape (p,) or a stack of shape (N, p) and return a float or an
(N,) array respectively.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit
from scipy.optimize import linprog

from .errors import ConvergenceError, DataError, NumericalError, SeparationError
from .kernels import LOG_2PI, GaussianSpec, SpdFactor, log_ndtr, spd_factorize, std_normal_logcdf


@njit(cache=True)
def _probit_loglik(theta, X, s, out):
    n, p = X.shape
    for j in range(theta.shape[0]):
        acc = 0.0
        for i in range(n):
            eta = 0.0
            for k in range(p):
                eta += X[i, k] * theta[j, k]
            acc += log_ndtr(s[i] * eta)
        out[j] = acc
    return out


@dataclass(frozen=True)
class Dataset:
    y: np.ndarray
    covariates: Mapping[str, np.ndarray]

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1 or y.size < 1:
            raise DataError("y must be a non-empty 1-d vector")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("y must contain only 0/1 values")
        cols = {}
        for name, col in self.covariates.items():
            col = np.asarray(col, dtype=float)
            if col.shape != y.shape:
                raise DataError(f"column {name!r} has length {col.size}, expected {y.size}")
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {name!r} contains missing or non-finite values")
            col.setflags(write=False)
            cols[name] = col
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "covariates", cols)

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def columns(self) -> list[str]:
        return list(self.covariates)

    def design(self, columns: Sequence[str]) -> np.ndarray:
        missing = [c for c in columns if c not in self.covariates]
        if missing:
            raise DataError(f"unknown column(s): {', '.join(missing)}")
        return np.column_stack([self.covariates[c] for c in columns])


@dataclass(frozen=True, eq=False)
class ProbitModel:
    data: Dataset
    selected_columns: tuple[str, ...]
    g: float | None = None
    X: np.ndarray = field(init=False, repr=False)
    XtX: SpdFactor = field(init=False, repr=False)
    prior: GaussianSpec = field(init=False, repr=False)

    def __post_init__(self):
        cols = tuple(self.selected_columns)
        if len(set(cols)) != len(cols) or not cols:
            raise DataError("selected columns must be a non-empty list of distinct names")
        object.__setattr__(self, "selected_columns", cols)
        g = float(self.data.n if self.g is None else self.g)
        if not g > 0:
            raise ValueError("g must be positive")
        object.__setattr__(self, "g", g)
        X = self.data.design(cols)
        X.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "_Xc", np.ascontiguousarray(X))
        object.__setattr__(self, "_signs", 2.0 * self.data.y - 1.0)
        object.__setattr__(self, "XtX", spd_factorize(X.T @ X))
        prior_cov = g * self.XtX.inverse()
        prior_cov = 0.5 * (prior_cov + prior_cov.T)
        object.__setattr__(self, "prior", GaussianSpec.from_cov(np.zeros(len(cols)), prior_cov))

    @property
    def dim(self) -> int:
        return len(self.selected_columns)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def y(self) -> np.ndarray:
        return self.data.y

    @property
    def signs(self) -> np.ndarray:
        return self._signs

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.X.tobytes())
        h.update(self.y.tobytes())
        h.update(repr((self.selected_columns, self.g)).encode())
        return h.hexdigest()[:16]

    def _check(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.ndim not in (1, 2) or theta.shape[-1] != self.dim:
            raise ValueError(f"theta of shape {theta.shape} does not match p={self.dim}")
        return theta

    def log_likelihood(self, theta):
        theta = self._check(theta)
        stack = np.ascontiguousarray(np.atleast_2d(theta))
        if not np.all(np.isfinite(stack)):
            raise ValueError("theta must be finite")
        out = _probit_loglik(stack, self._Xc, self._signs, np.empty(stack.shape[0]))
        return float(out[0]) if theta.ndim == 1 else out

    def log_prior(self, theta):
        """Normalized g-prior log-density."""
        theta = self._check(theta)
        p, g = self.dim, self.g
        w = theta @ self.XtX.lower_factor  # theta^T XtX theta = |L^T theta|^2
        quad = np.sum(w * w, axis=-1)
        out = -0.5 * p * (LOG_2PI + math.log(g)) + 0.5 * self.XtX.log_det - quad / (2.0 * g)
        return float(out) if np.ndim(out) == 0 else out

    def log_posterior_unnorm(self, theta):
        return self.log_likelihood(theta) + self.log_prior(theta)

    def completed_log_likelihood(self, theta, z) -> float:
        """log f(y, z | theta); -inf when the sign of z disagrees with y."""
        theta = self._check(theta)
        z = np.asarray(z, dtype=float)
        if theta.ndim != 1 or z.shape != (self.n,):
            raise ValueError("expected theta of shape (p,) and z of shape (n,)")
        consistent = np.where(self.y == 1, z > 0, z <= 0)
        if not np.all(consistent):
            return -math.inf
        r = z - self.X @ theta
        return float(-0.5 * self.n * LOG_2PI - 0.5 * np.dot(r, r))

    def mle_gaussian(self) -> GaussianSpec:
        return asymptotic_gaussian(fit_mle(self))

    def laplace_gaussian(self) -> GaussianSpec:
        return posterior_mode_gaussian(self)


def log_likelihood(theta, model: ProbitModel):
    return model.log_likelihood(theta)


def log_prior(theta, model: ProbitModel):
    return model.log_prior(theta)


def log_posterior_unnorm(theta, model: ProbitModel):
    return model.log_posterior_unnorm(theta)


def completed_log_likelihood(theta, z, model: ProbitModel) -> float:
    return model.completed_log_likelihood(theta, z)


# --------------------------------------------------------------------------
# Maximum likelihood


@dataclass(frozen=True)
class MleFit:
    theta_hat: np.ndarray
    cov_hat: SpdFactor
    iterations: int
    converged: bool
    log_likelihood: float
    information: str = "expected"
    gradient: np.ndarray | None = None

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov_hat.matrix()))

    @property
    def deviance(self) -> float:
        return -2.0 * self.log_likelihood


def _mills(t: np.ndarray) -> np.ndarray:
    """phi(t) / Phi(t), evaluated in log space."""
    return np.exp(-0.5 * LOG_2PI - 0.5 * t * t - std_normal_logcdf(t))


def _score_and_weights(theta, X, s):
    eta = X @ theta
    t = s * eta
    lam = _mills(t)
    grad = X.T @ (s * lam)
    # -d^2/deta^2 log Phi(s eta) = lam (t + lam), positive by log-concavity
    w_obs = lam * (t + lam)
    # phi^2 / (Phi(eta) Phi(-eta))
    w_exp = np.exp(-LOG_2PI - eta * eta - std_normal_logcdf(eta) - std_normal_logcdf(-eta))
    return grad, w_obs, w_exp


def is_separated(X, signs, tol: float = 1e-9) -> bool:
    """True when some beta != 0 has s_i x_i . beta >= 0 for every i.

    That is complete or quasi-complete separation, where the likelihood has
    no maximizer. Solved as a linear program over the unit box on column-
    scaled covariates; with X of full column rank the optimum is positive
    exactly when the data are separated.
    """
    A = np.asarray(signs, dtype=float)[:, None] * np.asarray(X, dtype=float)
    A = A / np.max(np.abs(A), axis=0)
    res = linprog(-A.sum(axis=0), A_ub=-A, b_ub=np.zeros(A.shape[0]),
                  bounds=[(-1.0, 1.0)] * A.shape[1], method="highs")
    return bool(res.status == 0 and -res.fun > tol * A.shape[0])


def fit_mle(
    model: ProbitModel,
    *,
    information: str = "expected",
    max_iter: int = 50,
    tol: float = 1e-8,
    raise_on_failure: bool = True,
) -> MleFit:
    """Newton-Raphson maximization of the probit log-likelihood from theta = 0.

    Each step uses the exact Hessian with step halving (up to 30 times) when
    the log-likelihood fails to increase. Once the predicted gain is below
    what the log-likelihood can resolve in floating point, the full step is
    taken unchecked (the quadratic model is exact to that order). Convergence is declared when the
    gradient infinity-norm drops below ``tol``. Separated data are rejected
    up front (:func:`is_separated`), since there the gradient vanishes
    along a diverging path and the tolerance alone would be met at a
    meaningless finite point.

    ``information`` selects the covariance reported in ``cov_hat``:
    ``"expected"`` inverts the Fisher information (what glm's Fisher scoring
    reports), ``"observed"`` inverts the negative Hessian at the optimum.
    """
    if information not in ("expected", "observed"):
        raise ValueError("information must be 'expected' or 'observed'")
    X, s = model.X, model.signs
    if is_separated(X, s):
        raise SeparationError("the responses are (quasi-)separated by the covariates; no finite MLE")
    theta = np.zeros(model.dim)
    ll = model.log_likelihood(theta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        grad, w_obs, _ = _score_and_weights(theta, X, s)
        if np.max(np.abs(grad)) < tol:
            converged = True
            it -= 1
            break
        neg_hess = (X * w_obs[:, None]).T @ X
        step = np.linalg.solve(neg_hess, grad)
        if 0.5 * grad @ step < 1e-12 * (1.0 + abs(ll)):
            theta = theta + step
            ll = model.log_likelihood(theta)
            continue
        t = 1.0
        for _ in range(31):
            cand = theta + t * step
            ll_cand = model.log_likelihood(cand)
            if ll_cand >= ll:
                break
            t *= 0.5
        theta, ll = cand, ll_cand
        if np.linalg.norm(theta) > 1e3:
            raise SeparationError(
                f"|theta| exceeded 1e3 after {it} iterations; the data look (quasi-)separated"
            )
    else:
        grad, w_obs, _ = _score_and_weights(theta, X, s)
        converged = bool(np.max(np.abs(grad)) < tol)
    grad, w_obs, w_exp = _score_and_weights(theta, X, s)
    if not converged:
        if raise_on_failure:
            raise ConvergenceError(
                f"Newton iterations did not converge in {max_iter} steps "
                f"(|grad|_inf={np.max(np.abs(grad)):.3e})",
                last_iterate=theta,
            )
    weights = w_exp if information == "expected" else w_obs
    info = (X * weights[:, None]).T @ X
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)
    return MleFit(
        theta_hat=theta,
        cov_hat=spd_factorize(cov),
        iterations=it,
        converged=converged,
        log_likelihood=float(ll),
        information=information,
        gradient=grad,
    )


def asymptotic_gaussian(fit: MleFit) -> GaussianSpec:
    if not fit.converged:
        raise NumericalError("asymptotic Gaussian requested for an unconverged fit")
    return GaussianSpec(fit.theta_hat.copy(), fit.cov_hat)


def posterior_mode_gaussian(model: ProbitModel, *, max_iter: int = 100, tol: float = 1e-14) -> GaussianSpec:
    """Laplace approximation: N(mode, inverse negative Hessian at the mode).

    The g-prior makes the log-posterior strictly concave, so the mode exists
    even for separated data, where the MLE does not. Stops once half the
    Newton decrement (the predicted log-density gain) is below ``tol``.
    """
    X, s = model.X, model.signs
    prior_prec = model.XtX.matrix() / model.g
    theta = np.zeros(model.dim)
    lp = model.log_posterior_unnorm(theta)
    for _ in range(max_iter):
        grad, w_obs, _ = _score_and_weights(theta, X, s)
        grad = grad - prior_prec @ theta
        neg_hess = (X * w_obs[:, None]).T @ X + prior_prec
        step = np.linalg.solve(neg_hess, grad)
        if 0.5 * grad @ step < tol:
            break
        t = 1.0
        for _ in range(31):
            cand = theta + t * step
            lp_cand = model.log_posterior_unnorm(cand)
            if lp_cand >= lp:
                break
            t *= 0.5
        theta, lp = cand, lp_cand
    else:
        raise ConvergenceError("posterior mode search did not converge", last_iterate=theta)
    _, w_obs, _ = _score_and_weights(theta, X, s)
    cov = np.linalg.inv((X * w_obs[:, None]).T @ X + prior_prec)
    return GaussianSpec.from_cov(theta, 0.5 * (cov + cov.T))


# --------------------------------------------------------------------------
# Gaussian conditioning


@dataclass(frozen=True)
class ConditionalGaussian:
    """psi | theta ~ N(intercept + slope . theta, sd^2)."""

    slope: np.ndarray
    intercept: float
    sd: float

    def mean(self, theta) -> np.ndarray | float:
        return self.intercept + np.asarray(theta, dtype=float) @ self.slope

    def logpdf(self, psi, theta):
        r = (np.asarray(psi, dtype=float) - self.mean(theta)) / self.sd
        return -0.5 * LOG_2PI - math.log(self.sd) - 0.5 * r * r

    def sample(self, theta, rng) -> np.ndarray:
        m = self.mean(theta)
        return m + self.sd * rng.generator.standard_normal(np.shape(m))


def conditional_gaussian(joint: GaussianSpec, target_index: int) -> ConditionalGaussian:
    """Distribution of coordinate ``target_index`` given all the others (in order)."""
    d = joint.dim
    if d < 2:
        raise ValueError("conditioning needs a joint of dimension >= 2")
    if not 0 <= target_index < d:
        raise IndexError(f"target_index {target_index} out of range for dimension {d}")
    cov = joint.cov
    rest = [i for i in range(d) if i != target_index]
    s_rr = cov[np.ix_(rest, rest)]
    s_tr = cov[target_index, rest]
    slope = np.linalg.solve(s_rr, s_tr)
    var = cov[target_index, target_index] - s_tr @ slope
    if not var > 0:
        raise NumericalError("non-positive conditional variance")
    intercept = joint.mean[target_index] - slope @ joint.mean[rest]
    return ConditionalGaussian(slope=slope, intercept=float(intercept), sd=math.sqrt(var))
