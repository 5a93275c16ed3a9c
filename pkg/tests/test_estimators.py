from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from probit_evidence.estimators import (
    ConstantAlpha,
    HeavyTailWarning,
    LogEvidence,
    _optimal_iterate,
    bayes_factor,
    bridge_extended_bf,
    bridge_same_space_bf,
    chib_evidence,
    completed_log_densities,
    crude_mc_evidence,
    harmonic_evidence,
    importance_evidence,
    make_mixture_alpha,
    optimal_alpha_bridge_bf,
    pseudo_prior_ratio_bf,
)
from probit_evidence.gibbs import gibbs_run
from probit_evidence.kernels import GaussianSpec, RngStream, logsumexp
from probit_evidence.model import ConditionalGaussian, ProbitModel, conditional_gaussian, fit_mle
from probit_evidence.oracle import quadrature_log_evidence
from probit_evidence.synthetic import oracle_log_evidences, pair, small
from probit_evidence.toy import FlatLikelihoodModel, LinearGaussianModel, exact_chain


@pytest.fixture(scope="module")
def toy_pair():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(25, 2))
    z = X @ np.array([0.8, 0.3]) + rng.normal(size=25)
    t0 = LinearGaussianModel(X[:, :1], z, g=4.0)
    t1 = LinearGaussianModel(X, z, g=4.0)
    return t0, t1


@pytest.fixture(scope="module")
def probit_pair():
    d = pair()
    m0, m1 = ProbitModel(d, ("x1",)), ProbitModel(d, ("x1", "x2"))
    g0, g1 = m0.mle_gaussian(), m1.mle_gaussian()
    omega = conditional_gaussian(g1, 1)
    c0 = gibbs_run(m0, 50_000, RngStream.derive(1, "est", 0), theta_star=g0.mean)
    c1 = gibbs_run(m1, 50_000, RngStream.derive(1, "est", 1), theta_star=g1.mean)
    exact = oracle_log_evidences()["pair/x1"] - oracle_log_evidences()["pair/x1x2"]
    return m0, m1, g0, g1, omega, c0, c1, exact


def within(est, se, exact, k=3.0):
    return abs(est - exact) < k * se


# ---------------------------------------------------------------- result types


def test_result_types():
    with pytest.raises(ValueError):
        LogEvidence(0.0, 0, "crude_mc")
    b = bayes_factor(LogEvidence(-3.0, 10, "chib", 1.0, 0.3), LogEvidence(-5.0, 12, "chib", 2.0, 0.4))
    assert b.log_b01 == 2.0 and b.n_sims == (10, 12) and b.wall_time == 3.0
    assert b.se == pytest.approx(0.5)
    assert b.b01 == pytest.approx(math.exp(2.0))


# ---------------------------------------------------------------- crude MC / IS


def test_crude_mc_flat_likelihood_is_exact():
    model = FlatLikelihoodModel(GaussianSpec.from_cov([0.0, 0.0], np.eye(2)))
    assert crude_mc_evidence(model, 1000, RngStream(0)).value == 0.0


def test_crude_mc_synthetic_million():
    m = ProbitModel(small(), ("x1",))
    e = crude_mc_evidence(m, 1_000_000, RngStream.derive(2, "mc-1e6"))
    assert within(e.value, e.se, oracle_log_evidences()["small"])
    assert e.n_sims == 1_000_000 and e.method == "crude_mc"


def test_importance_with_prior_proposal_equals_crude_mc():
    m = ProbitModel(pair(), ("x1", "x2"))
    a = crude_mc_evidence(m, 5000, RngStream.derive(3, "shared"))
    b = importance_evidence(m, m.prior, 5000, RngStream.derive(3, "shared"))
    assert b.value == pytest.approx(a.value, abs=1e-10)


def test_importance_synthetic():
    m = ProbitModel(small(), ("x1",))
    e = importance_evidence(m, m.mle_gaussian(), 100_000, RngStream.derive(4, "is"))
    assert within(e.value, e.se, oracle_log_evidences()["small"])


def test_importance_dimension_checked():
    m = ProbitModel(small(), ("x1",))
    with pytest.raises(ValueError):
        importance_evidence(m, GaussianSpec.from_cov([0.0, 0.0], np.eye(2)), 10, RngStream(0))


def test_importance_exact_with_posterior_proposal(toy_pair):
    _, t1 = toy_pair
    e = importance_evidence(t1, t1.posterior, 200, RngStream(0))
    assert e.value == pytest.approx(t1.log_evidence(), abs=1e-10)
    assert e.se < 1e-12


# ---------------------------------------------------------------- harmonic mean / Chib


def test_harmonic_exact_on_toy(toy_pair):
    _, t1 = toy_pair
    chain = exact_chain(t1, 500, RngStream.derive(0, "toy-hm"))
    e = harmonic_evidence(t1, chain, t1.posterior)
    assert e.value == pytest.approx(t1.log_evidence(), abs=1e-10)
    assert e.se < 1e-12


def test_harmonic_synthetic():
    m = ProbitModel(small(), ("x1",))
    c = gibbs_run(m, 100_000, RngStream.derive(5, "hm"))
    e = harmonic_evidence(m, c, m.laplace_gaussian())
    assert within(e.value, e.se, oracle_log_evidences()["small"])


def test_harmonic_warns_on_misplaced_phi():
    # phi shifted 8 posterior sds: weights grow like exp(8 z), relative variance ~ e^64
    m = ProbitModel(small(), ("x1",))
    c = gibbs_run(m, 5000, RngStream.derive(5, "hm-heavy"))
    lap = m.laplace_gaussian()
    shifted = GaussianSpec.from_cov(lap.mean + 8 * np.sqrt(lap.cov[0, 0]), lap.cov)
    with pytest.warns(HeavyTailWarning):
        harmonic_evidence(m, c, shifted)
    with warnings.catch_warnings():
        warnings.simplefilter("error", HeavyTailWarning)
        harmonic_evidence(m, c, m.laplace_gaussian())


@pytest.mark.parametrize("T", [1, 10, 2000])
def test_chib_exact_on_toy(toy_pair, T):
    _, t1 = toy_pair
    chain = exact_chain(t1, T, RngStream.derive(0, "toy-chib", T), theta_star=np.array([0.5, 0.5]))
    assert abs(chib_evidence(t1, chain).value - t1.log_evidence()) <= 1e-10


def test_chib_synthetic():
    m = ProbitModel(small(), ("x1",))
    c = gibbs_run(m, 100_000, RngStream.derive(6, "chib"), theta_star=fit_mle(m).theta_hat)
    e = chib_evidence(m, c)
    assert within(e.value, e.se, oracle_log_evidences()["small"])


# ---------------------------------------------------------------- same-space bridge


def test_same_space_identical_models():
    m = ProbitModel(small(), ("x1",))
    c = gibbs_run(m, 100, RngStream(0))
    assert bridge_same_space_bf(m, m, c).log_b01 == 0.0


def test_same_space_g_variants():
    d = small()
    m_n, m_2n = ProbitModel(d, ("x1",)), ProbitModel(d, ("x1",), g=2.0 * d.n)
    c = gibbs_run(m_n, 100_000, RngStream.derive(7, "ss-g"))
    b = bridge_same_space_bf(m_2n, m_n, c)
    exact = quadrature_log_evidence(m_2n) - quadrature_log_evidence(m_n)
    assert within(b.log_b01, b.se, exact)


def _second_moment(num, den):
    """log of the integral of pi_num^2 / pi_den over [-lim, lim], for growing lim."""
    ev = oracle_log_evidences()
    out = []
    for lim in (10.0, 40.0):
        t = np.linspace(-lim, lim, 200_001)[:, None]
        a = num.log_posterior_unnorm(t) - ev["pair/" + num.selected_columns[0]]
        b = den.log_posterior_unnorm(t) - ev["pair/" + den.selected_columns[0]]
        out.append(logsumexp(2 * a - b) + math.log(t[1, 0] - t[0, 0]))
    return out


def test_same_space_weight_variance_direction():
    # sampling x2 and weighting towards x1 has finite variance; the reverse does not
    d = pair()
    m_a, m_b = ProbitModel(d, ("x1",)), ProbitModel(d, ("x2",))
    finite = _second_moment(m_a, m_b)
    assert finite[0] == pytest.approx(finite[1], abs=1e-9) and finite[0] < 3.0
    diverging = _second_moment(m_b, m_a)
    assert diverging[1] > diverging[0] + 100


def test_same_space_different_covariates():
    d = pair()
    m_a, m_b = ProbitModel(d, ("x1",)), ProbitModel(d, ("x2",))
    c = gibbs_run(m_b, 100_000, RngStream.derive(7, "ss-cov"))
    b = bridge_same_space_bf(m_a, m_b, c)
    exact = oracle_log_evidences()["pair/x1"] - oracle_log_evidences()["pair/x2"]
    assert within(b.log_b01, b.se, exact)


def test_same_space_refuses_embedded(probit_pair):
    m0, m1, *_ , c1, _ = probit_pair
    with pytest.raises(ValueError):
        bridge_same_space_bf(m0, m1, c1)


# ---------------------------------------------------------------- extended bridge


def test_bridge_toy_constant_alpha_exact_omega(toy_pair):
    t0, t1 = toy_pair
    omega = conditional_gaussian(t1.posterior, 1)
    c0 = exact_chain(t0, 50_000, RngStream.derive(8, "toy-b", 0))
    c1 = exact_chain(t1, 50_000, RngStream.derive(8, "toy-b", 1))
    b = bridge_extended_bf(t0, t1, omega, c0, c1, ConstantAlpha(), RngStream.derive(8, "toy-b", 2))
    assert within(b.log_b01, b.se, t0.log_evidence() - t1.log_evidence())


def test_bridge_synthetic_mixture_alpha(probit_pair):
    m0, m1, g0, g1, omega, c0, c1, exact = probit_pair
    b = bridge_extended_bf(m0, m1, omega, c0, c1, make_mixture_alpha(g0, g1, omega), RngStream.derive(9, "b"))
    assert within(b.log_b01, b.se, exact)
    assert b.n_sims == (c0.T, c1.T)


def test_bridge_alpha_scale_invariance(probit_pair):
    m0, m1, g0, g1, omega, c0, c1, _ = probit_pair
    alpha = make_mixture_alpha(g0, g1, omega)
    a = bridge_extended_bf(m0, m1, omega, c0, c1, alpha, RngStream.derive(9, "scale"))
    b = bridge_extended_bf(m0, m1, omega, c0, c1, alpha.scaled(10.0), RngStream.derive(9, "scale"))
    assert abs(a.log_b01 - b.log_b01) < 1e-12


def test_bridge_two_alphas_agree(probit_pair):
    m0, m1, g0, g1, omega, c0, c1, _ = probit_pair
    a = bridge_extended_bf(m0, m1, omega, c0, c1, make_mixture_alpha(g0, g1, omega), RngStream.derive(9, "a1"))
    b = bridge_extended_bf(m0, m1, omega, c0, c1, ConstantAlpha(), RngStream.derive(9, "a2"))
    assert abs(a.log_b01 - b.log_b01) < 3 * math.hypot(a.se, b.se)


def test_bridge_refuses_non_embedded(probit_pair):
    m0, m1, g0, g1, omega, c0, c1, _ = probit_pair
    other = ProbitModel(pair(), ("x2", "x1"))
    with pytest.raises(ValueError):
        bridge_extended_bf(m0, other, omega, c0, c1, ConstantAlpha(), RngStream(0))
    with pytest.raises(ValueError):
        bridge_extended_bf(m1, m0, omega, c1, c0, ConstantAlpha(), RngStream(0))
    with pytest.raises(ValueError):
        pseudo_prior_ratio_bf(m0, ProbitModel(small(), ("x1",)), omega, c0, RngStream(0))


# ---------------------------------------------------------------- mixture alpha


def test_mixture_alpha_when_components_coincide():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(3, 3))
    joint = GaussianSpec.from_cov(rng.normal(size=3), a @ a.T + np.eye(3))
    marg = GaussianSpec.from_cov(joint.mean[:2], joint.cov[:2, :2])
    omega = conditional_gaussian(joint, 2)
    alpha = make_mixture_alpha(marg, joint, omega)
    pts = rng.normal(size=(50, 3))
    np.testing.assert_allclose(alpha.log_alpha(pts), -joint.logpdf(pts), atol=1e-10, rtol=0)


def test_mixture_alpha_composition(probit_pair):
    _, _, g0, g1, omega, *_ = probit_pair
    alpha = make_mixture_alpha(g0, g1, omega)
    x = g1.mean
    direct = 1.0 / (0.5 * math.exp(g1.logpdf(x))
                    + 0.5 * math.exp(g0.logpdf(x[:1]) + omega.logpdf(x[1], x[:1])))
    assert math.exp(alpha.log_alpha(x)[0]) == pytest.approx(direct, rel=1e-12)


def test_mixture_alpha_weights(probit_pair):
    _, _, g0, g1, omega, *_ = probit_pair
    assert make_mixture_alpha(g0, g1, omega, "budget", budgets=(100, 300)).weights == (0.25, 0.75)
    with pytest.raises(ValueError):
        make_mixture_alpha(g0, g1, omega, "budget")
    with pytest.raises(ValueError):
        make_mixture_alpha(g0, g1, omega, (0.0, 1.0))
    with pytest.raises(ValueError):
        make_mixture_alpha(g1, g1, omega)


# ---------------------------------------------------------------- optimal bridge


def test_optimal_bridge_synthetic(probit_pair):
    m0, m1, *_, omega, c0, c1, exact = probit_pair
    b = optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream.derive(10, "opt"))
    assert b.converged and b.iterations < 200
    assert within(b.log_b01, b.se, exact)


def test_optimal_bridge_single_iteration_is_finite(probit_pair):
    m0, m1, g0, g1, omega, c0, c1, _ = probit_pair
    start = bridge_extended_bf(m0, m1, omega, c0, c1, make_mixture_alpha(g0, g1, omega), RngStream(1))
    b = optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream(2), iterations=1,
                                initial_log_b01=start.log_b01)
    assert math.isfinite(b.log_b01) and b.iterations == 1


def test_optimal_bridge_fixed_point(probit_pair):
    m0, m1, *_, omega, c0, c1, _ = probit_pair
    b = optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream.derive(10, "fp"))
    again = optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream.derive(10, "fp"),
                                    iterations=1, initial_log_b01=b.log_b01)
    assert abs(again.log_b01 - b.log_b01) < 1e-8


def test_optimal_bridge_reports_non_convergence(probit_pair):
    m0, m1, *_, omega, c0, c1, _ = probit_pair
    b = optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream(3), iterations=2, initial_log_b01=5.0)
    assert not b.converged and b.iterations == 2 and math.isfinite(b.log_b01)
    with pytest.raises(ValueError):
        optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream(3), iterations=0)


def test_optimal_bridge_variance_not_above_mixture_alpha():
    d = pair()
    m0, m1 = ProbitModel(d, ("x1",)), ProbitModel(d, ("x1", "x2"))
    g0, g1 = m0.mle_gaussian(), m1.mle_gaussian()
    omega = conditional_gaussian(g1, 1)
    alpha = make_mixture_alpha(g0, g1, omega)
    opt, mixture = [], []
    for r in range(100):
        c0 = gibbs_run(m0, 5000, RngStream.derive(12, r, 0), start=g0.mean)
        c1 = gibbs_run(m1, 5000, RngStream.derive(12, r, 1), start=g1.mean)
        mixture.append(bridge_extended_bf(m0, m1, omega, c0, c1, alpha, RngStream.derive(12, r, 2)).log_b01)
        opt.append(optimal_alpha_bridge_bf(m0, m1, omega, c0, c1, RngStream.derive(12, r, 2)).log_b01)
    assert np.std(opt, ddof=1) <= np.std(mixture, ddof=1)


def test_optimal_iterate_antisymmetric():
    rng = np.random.default_rng(0)
    l0 = rng.normal(-0.3, 1.0, 4000)
    l1 = rng.normal(0.4, 0.8, 3000)
    r01, ok1, _ = _optimal_iterate(l0, l1, 0.0, 500, 1e-13)
    r10, ok2, _ = _optimal_iterate(-l1, -l0, 0.0, 500, 1e-13)
    assert ok1 and ok2
    assert r01 == pytest.approx(-r10, abs=1e-10)


# ---------------------------------------------------------------- pseudo-prior ratio


def test_pseudo_ratio_toy_exact_omega(toy_pair):
    t0, t1 = toy_pair
    omega = conditional_gaussian(t1.posterior, 1)
    c0 = exact_chain(t0, 50_000, RngStream.derive(13, "toy-pr"))
    b = pseudo_prior_ratio_bf(t0, t1, omega, c0, RngStream.derive(13, "toy-pr-psi"))
    assert within(b.log_b01, b.se, t0.log_evidence() - t1.log_evidence())


def test_pseudo_ratio_synthetic(probit_pair):
    m0, m1, *_, omega, c0, _, exact = probit_pair
    b = pseudo_prior_ratio_bf(m0, m1, omega, c0, RngStream.derive(14, "pr"))
    assert within(b.log_b01, b.se, exact)


class _Product:
    """Model 1 = model 0 times omega: the likelihood ignores psi."""

    def __init__(self, base, omega):
        self.base, self.omega = base, omega
        self.dim = base.dim + 1

    def log_posterior_unnorm(self, points):
        points = np.atleast_2d(points)
        theta, psi = points[:, :-1], points[:, -1]
        return self.base.log_posterior_unnorm(theta) + self.omega.logpdf(psi, theta)


def test_pseudo_ratio_cancels_exactly():
    m0 = ProbitModel(small(), ("x1",))
    omega = ConditionalGaussian(slope=np.array([0.3]), intercept=0.1, sd=0.7)
    c0 = gibbs_run(m0, 1000, RngStream(0))
    b = pseudo_prior_ratio_bf(m0, _Product(m0, omega), omega, c0, RngStream(1))
    assert b.log_b01 == 0.0


def test_completed_densities_direct(probit_pair):
    m0, m1, *_, omega, _, _, _ = probit_pair
    pts = np.array([[0.1, -0.5], [0.0, 0.0]])
    lp0, lp1 = completed_log_densities(m0, m1, omega, pts)
    for k, (theta, psi) in enumerate(pts):
        t = np.array([theta])
        assert lp0[k] == pytest.approx(m0.log_posterior_unnorm(t) + omega.logpdf(psi, t), abs=1e-12)
        assert lp1[k] == pytest.approx(m1.log_posterior_unnorm(pts[k]), abs=1e-12)


# ---------------------------------------------------------------- symmetry and determinism


def test_evidence_based_antisymmetry():
    d = pair()
    m0, m1 = ProbitModel(d, ("x1",)), ProbitModel(d, ("x1", "x2"))
    e0 = crude_mc_evidence(m0, 2000, RngStream.derive(15, "role", 0))
    e1 = crude_mc_evidence(m1, 2000, RngStream.derive(15, "role", 1))
    assert bayes_factor(e0, e1).log_b01 == -bayes_factor(e1, e0).log_b01
    c0 = gibbs_run(m0, 2000, RngStream.derive(15, "g", 0), theta_star=fit_mle(m0).theta_hat)
    c1 = gibbs_run(m1, 2000, RngStream.derive(15, "g", 1), theta_star=fit_mle(m1).theta_hat)
    e0, e1 = chib_evidence(m0, c0), chib_evidence(m1, c1)
    assert bayes_factor(e0, e1).log_b01 == -bayes_factor(e1, e0).log_b01


def test_estimators_deterministic(probit_pair):
    m0, m1, g0, g1, omega, c0, c1, _ = probit_pair
    runs = [
        (crude_mc_evidence(m1, 3000, RngStream(5)).value,
         importance_evidence(m1, g1, 3000, RngStream(6)).value,
         bridge_extended_bf(m0, m1, omega, c0, c1, make_mixture_alpha(g0, g1, omega), RngStream(7)).log_b01,
         pseudo_prior_ratio_bf(m0, m1, omega, c0, RngStream(8)).log_b01)
        for _ in range(2)
    ]
    assert runs[0] == runs[1]
