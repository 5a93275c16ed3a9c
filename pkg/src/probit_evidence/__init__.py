"""Bayes factors for probit variable selection by importance-sampling-type estimators."""

from .estimators import (
    BayesFactorEstimate,
    ConstantAlpha,
    LogEvidence,
    bayes_factor,
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
from .gibbs import Chain, gibbs_run, rao_blackwell_logdensity
from .kernels import GaussianSpec, RngStream, SpdFactor, spd_factorize
from .model import (
    ConditionalGaussian,
    Dataset,
    MleFit,
    ProbitModel,
    asymptotic_gaussian,
    conditional_gaussian,
    fit_mle,
    posterior_mode_gaussian,
)
from .oracle import QuadratureSpec, quadrature_log_evidence, quadrature_posterior_mean

__all__ = [
    "BayesFactorEstimate",
    "Chain",
    "ConditionalGaussian",
    "ConstantAlpha",
    "Dataset",
    "GaussianSpec",
    "LogEvidence",
    "MleFit",
    "ProbitModel",
    "QuadratureSpec",
    "RngStream",
    "SpdFactor",
    "asymptotic_gaussian",
    "bayes_factor",
    "bridge_extended_bf",
    "bridge_same_space_bf",
    "chib_evidence",
    "conditional_gaussian",
    "crude_mc_evidence",
    "fit_mle",
    "gibbs_run",
    "harmonic_evidence",
    "importance_evidence",
    "make_mixture_alpha",
    "optimal_alpha_bridge_bf",
    "posterior_mode_gaussian",
    "pseudo_prior_ratio_bf",
    "quadrature_log_evidence",
    "quadrature_posterior_mean",
    "rao_blackwell_logdensity",
    "spd_factorize",
]
