from __future__ import annotations

import math

import numpy as np
import pytest

from probit_evidence.errors import NumericalError
from probit_evidence.gibbs import (
    gibbs_run,
    rao_blackwell_logdensity,
    read_chain_csv,
    sample_latents,
    theta_full_conditional,
    write_chain_csv,
)
from probit_evidence.kernels import GaussianSpec, RngStream, logsumexp
from probit_evidence.model import Dataset, ProbitModel, fit_mle
from probit_evidence.oracle import QuadratureSpec, quadrature_log_evidence, quadrature_posterior_mean
from probit_evidence.synthetic import pair, small
from probit_evidence.toy import LinearGaussianModel, exact_chain

HALF_NORMAL_MEAN = math.sqrt(2 / math.pi)


def batch_means_se(x, batches=50):
    """Autocorrelation-adjusted SE of the mean of a chain, by batch means."""
    means = np.array([b.mean(axis=0) for b in np.array_split(np.asarray(x), batches)])
    return means.std(axis=0, ddof=1) / math.sqrt(batches)


# ---------------------------------------------------------------- latents


def test_latents_inactive_truncation():
    x = np.ones(50_000)
    m = ProbitModel(Dataset(np.ones(50_000, int), {"x": x}), ("x",))
    z = sample_latents(np.array([10.0]), m, RngStream.derive(0, "lat10"))
    assert np.all(z > 0)
    assert abs(z.mean() - 10.0) < 0.02


def test_latents_half_normal_mean():
    n = 100_000
    m = ProbitModel(Dataset(np.ones(n, int), {"x": np.ones(n)}), ("x",))
    z = sample_latents(np.array([0.0]), m, RngStream.derive(0, "hn"))
    assert abs(z.mean() - HALF_NORMAL_MEAN) < 0.01


def test_latents_mixed_signs_at_zero():
    n = 200_000
    y = np.tile([0, 1], n // 2)
    m = ProbitModel(Dataset(y, {"x": np.linspace(-1, 1, n)}), ("x",))
    z = sample_latents(np.array([0.0]), m, RngStream.derive(0, "mixed"))
    assert np.all(z[y == 1] > 0) and np.all(z[y == 0] <= 0)
    assert abs(z[y == 1].mean() - HALF_NORMAL_MEAN) < 0.01
    assert abs(z[y == 0].mean() + HALF_NORMAL_MEAN) < 0.01


def test_latent_shape_checked():
    m = ProbitModel(small(), ("x1",))
    with pytest.raises(ValueError):
        sample_latents(np.zeros(2), m, RngStream(0))


# ---------------------------------------------------------------- full conditional


def test_full_conditional_zero_latents():
    m = ProbitModel(pair(), ("x1", "x2"))
    fc = theta_full_conditional(np.zeros(m.n), m)
    np.testing.assert_allclose(fc.mean, 0.0, atol=1e-15)


def test_full_conditional_ones_design():
    n, g = 12, 5.0
    m = ProbitModel(Dataset(np.arange(n) % 2, {"one": np.ones(n)}), ("one",), g=g)
    z = np.random.default_rng(0).normal(size=n)
    fc = theta_full_conditional(z, m)
    c = g / (g + 1)
    assert fc.mean[0] == pytest.approx(c * z.mean(), abs=1e-14)
    assert fc.cov_factor.matrix()[0, 0] == pytest.approx(c / n, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_full_conditional_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    n, p = 30, 3
    X = rng.normal(size=(n, p))
    d = Dataset(rng.integers(0, 2, n), {f"c{k}": X[:, k] for k in range(p)})
    g = float(rng.uniform(0.5, 50))
    m = ProbitModel(d, tuple(d.columns), g=g)
    z = rng.normal(size=n)
    # conjugate linear regression: prior N(0, g (X'X)^-1), unit noise
    prior_prec = X.T @ X / g
    cov = np.linalg.inv(prior_prec + X.T @ X)
    mean = cov @ (X.T @ z)
    fc = theta_full_conditional(z, m)
    np.testing.assert_allclose(fc.mean, mean, atol=1e-10, rtol=0)
    np.testing.assert_allclose(fc.cov_factor.matrix(), cov, atol=1e-10, rtol=0)


def test_full_conditional_default_g_is_n_over_n_plus_one():
    m = ProbitModel(small(), ("x1",))
    fc = theta_full_conditional(np.ones(m.n), m)
    xtx = float(m.X[:, 0] @ m.X[:, 0])
    assert fc.cov_factor.matrix()[0, 0] == pytest.approx(20 / 21 / xtx, rel=1e-13)


# ---------------------------------------------------------------- chains


def test_single_cycle_pinned():
    m = ProbitModel(pair(), ("x1", "x2"))
    c = gibbs_run(m, 1, RngStream.derive(0, "pin"))
    np.testing.assert_allclose(c.theta_draws, [[-0.28170676571685827, -0.3075572554545464]], rtol=1e-12)
    np.testing.assert_allclose(c.cond_means, [[-0.04196803914306038, -0.7307270815609966]], rtol=1e-12)


def test_chain_meta_and_start():
    m = ProbitModel(pair(), ("x1", "x2"))
    c = gibbs_run(m, 10, RngStream.derive(3, "meta"))
    np.testing.assert_array_equal(c.meta["start"], fit_mle(m).theta_hat)
    assert c.meta["seed"] == 3 and c.meta["T"] == 10 == c.T
    assert c.meta["model"] == m.fingerprint()
    assert c.theta_draws.shape == (10, 2)
    with pytest.raises(ValueError):
        gibbs_run(m, 0, RngStream(0))


def test_chain_reproducible():
    m = ProbitModel(pair(), ("x1", "x2"))
    star = np.array([0.1, -0.7])
    a = gibbs_run(m, 2000, RngStream.derive(9, "rep"), theta_star=star)
    b = gibbs_run(m, 2000, RngStream.derive(9, "rep"), theta_star=star)
    np.testing.assert_array_equal(a.theta_draws, b.theta_draws)
    np.testing.assert_array_equal(a.rb_logdensities, b.rb_logdensities)


def test_latent_signs_hold_over_a_chain():
    m = ProbitModel(pair(), ("x1", "x2"))
    c = gibbs_run(m, 3000, RngStream.derive(0, "signs-chain"))
    rng = RngStream.derive(0, "signs-latents")
    for theta in c.theta_draws:
        z = sample_latents(theta, m, rng)
        assert np.all((z > 0) == (m.y == 1))


def test_chain_mean_matches_quadrature():
    m = ProbitModel(small(), ("x1",))
    c = gibbs_run(m, 50_000, RngStream.derive(1, "mean"))
    oracle = quadrature_posterior_mean(m, QuadratureSpec(points_per_dim=201))
    se = batch_means_se(c.theta_draws)
    assert np.all(np.abs(c.theta_draws.mean(axis=0) - oracle) < 4 * se)


def test_chain_mean_matches_quadrature_p2():
    m = ProbitModel(pair(), ("x1", "x2"))
    c = gibbs_run(m, 50_000, RngStream.derive(1, "mean2"))
    oracle = quadrature_posterior_mean(m)
    se = batch_means_se(c.theta_draws)
    assert np.all(np.abs(c.theta_draws.mean(axis=0) - oracle) < 4 * se)


def test_two_seeds_agree():
    m = ProbitModel(pair(), ("x1", "x2"))
    a = gibbs_run(m, 20_000, RngStream.derive(1, "stat"))
    b = gibbs_run(m, 20_000, RngStream.derive(2, "stat"))
    se = np.hypot(batch_means_se(a.theta_draws), batch_means_se(b.theta_draws))
    assert np.all(np.abs(a.theta_draws.mean(axis=0) - b.theta_draws.mean(axis=0)) < 6 * se)


# ---------------------------------------------------------------- Rao-Blackwell


def test_rb_requires_theta_star():
    m = ProbitModel(small(), ("x1",))
    with pytest.raises(NumericalError):
        rao_blackwell_logdensity(gibbs_run(m, 5, RngStream(0)))


def test_rb_single_iteration_is_cached_value():
    m = ProbitModel(small(), ("x1",))
    c = gibbs_run(m, 1, RngStream(0), theta_star=np.array([1.0]))
    assert rao_blackwell_logdensity(c) == c.rb_logdensities[0]
    fc = GaussianSpec(c.cond_means[0], theta_full_conditional(np.zeros(m.n), m).cov_factor)
    assert c.rb_logdensities[0] == pytest.approx(fc.logpdf(np.array([1.0])), abs=1e-12)


@pytest.mark.parametrize("T", [1, 7, 1000])
def test_rb_exact_on_conjugate_toy(T):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(15, 2))
    toy = LinearGaussianModel(X, X @ np.array([0.5, -1.0]) + rng.normal(size=15), g=3.0)
    star = np.array([0.4, -0.8])
    c = exact_chain(toy, T, RngStream.derive(0, "toy", T), theta_star=star)
    assert rao_blackwell_logdensity(c) == pytest.approx(toy.posterior.logpdf(star), abs=1e-12)


def test_rb_density_matches_quadrature():
    m = ProbitModel(small(), ("x1",))
    star = fit_mle(m).theta_hat
    c = gibbs_run(m, 50_000, RngStream.derive(2, "rb"), theta_star=star)
    log_m = quadrature_log_evidence(m, QuadratureSpec(points_per_dim=201))
    true_density = math.exp(m.log_posterior_unnorm(star) - log_m)
    terms = np.exp(c.rb_logdensities)
    est = terms.mean()
    se = batch_means_se(terms)
    assert abs(est - true_density) < 3 * se
    assert rao_blackwell_logdensity(c) == pytest.approx(logsumexp(c.rb_logdensities) - math.log(c.T))


# ---------------------------------------------------------------- chain dump


def test_chain_csv_round_trip(tmp_path):
    m = ProbitModel(pair(), ("x1", "x2"))
    c = gibbs_run(m, 25, RngStream.derive(0, "csv"))
    path = tmp_path / "chain.csv"
    write_chain_csv(c, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,theta_1,theta_2"
    assert lines[1].startswith("1,") and lines[-1].startswith("25,")
    np.testing.assert_array_equal(read_chain_csv(path), c.theta_draws)

