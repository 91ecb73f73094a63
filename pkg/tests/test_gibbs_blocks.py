"""Full-conditional checks for each block against closed forms or grid posteriors.

Large draw counts come from tiling identical items or individuals, so a
single vectorized block call yields many independent draws.
"""

import logging

import numpy as np
import pytest
from scipy import integrate, stats

from core.errors import SamplingError
from core.rng import RngStream
from engine.block_executor import BlockExecutor
from engine.gibbs import (
    BLOCK_ORDER,
    BlockStats,
    allocation_posterior,
    component_posterior,
    guessing_weight,
    relabel_components,
    update_ab,
    update_c,
    update_mu_sigma,
    update_p,
    update_theta_W,
    update_ZX,
    weights_acceptable,
)
from core.distributions import sample_nig
from model.state import ItemParameters, MixtureParameters, PriorSpec, ResponseMatrix

N = 100_000


def _grid_moments(log_density, *axes):
    """Means and sds of each axis under a density evaluated on a uniform grid."""
    weights = np.exp(log_density - log_density.max())
    weights /= weights.sum()
    out = []
    for axis in axes:
        mean = np.sum(weights * axis)
        out.append((mean, np.sqrt(np.sum(weights * (axis - mean) ** 2))))
    return out


def test_block_order():
    assert BLOCK_ORDER == ('ZX', 'theta_W', 'ab', 'c', 'mu_sigma2', 'p')


def test_block_stats_add():
    total = BlockStats(10, 2) + BlockStats(5, 3)
    assert (total.proposals, total.rejections) == (15, 5)
    assert total.acceptance_rate == pytest.approx(2 / 3)
    assert BlockStats().acceptance_rate == 1.0


# ── (X, Z) ──

def test_guessing_weight_enumeration():
    assert guessing_weight(np.array(0.0), np.array(0.2)) == pytest.approx(1 / 3)


def test_update_ZX_correct_responses(rng):
    responses = ResponseMatrix(values=np.ones((N, 1)), observed=np.ones((N, 1), bool))
    items = ItemParameters(a=[1.0], b=[0.0], c=[0.2])
    Z, X = update_ZX(responses, items, np.zeros(N), rng)
    assert Z.mean() == pytest.approx(1 / 3, abs=4 * np.sqrt(2 / 9 / N))
    assert np.all(X[Z] == 0.0)
    assert np.all(X[~Z] > 0.0)
    assert X[~Z].mean() == pytest.approx(np.sqrt(2 / np.pi), abs=0.01)


def test_update_ZX_incorrect_and_missing_cells(rng):
    observed = np.ones((200, 2), bool)
    observed[::2, 1] = False
    responses = ResponseMatrix(values=np.zeros((200, 2)), observed=observed)
    items = ItemParameters(a=[1.0, 1.0], b=[0.0, 0.0], c=[0.3, 0.3])
    Z, X = update_ZX(responses, items, np.zeros(200), rng)
    assert not Z.any()
    assert np.all(X[observed] < 0)
    assert np.all(X[~observed] == 0.0)


def test_update_ZX_without_guessing(rng):
    responses = ResponseMatrix(values=np.ones((500, 1)), observed=np.ones((500, 1), bool))
    items = ItemParameters(a=[1.0], b=[0.0], c=[0.0])
    Z, X = update_ZX(responses, items, np.zeros(500), rng)
    assert not Z.any()
    assert np.all(X > 0)


# ── (θ, W) ──

def test_theta_single_component_closed_form(rng):
    responses = ResponseMatrix(values=np.ones((N, 1)), observed=np.ones((N, 1), bool))
    items = ItemParameters(a=[1.0], b=[0.0], c=[0.0])
    theta, W = update_theta_W(
        np.full((N, 1), 0.7), np.zeros((N, 1), bool), responses, items,
        MixtureParameters.standard_normal(), rng,
    )
    assert np.all(W == 0)
    assert theta.mean() == pytest.approx(0.35, abs=0.01)
    assert theta.var() == pytest.approx(0.5, abs=0.01)


def test_theta_without_informative_cells_draws_from_mixture(rng, study1_mixture):
    responses = ResponseMatrix(values=np.ones((N, 1)), observed=np.ones((N, 1), bool))
    items = ItemParameters(a=[1.0], b=[0.0], c=[0.3])
    theta, W = update_theta_W(
        np.zeros((N, 1)), np.ones((N, 1), bool), responses, items, study1_mixture, rng,
    )
    assert np.mean(W == 0) == pytest.approx(0.8, abs=0.006)
    assert theta[W == 1].mean() == pytest.approx(2.5, abs=0.015)
    assert theta[W == 1].var() == pytest.approx(0.25, abs=0.01)
    assert theta[W == 0].var() == pytest.approx(1.0, abs=0.02)


def test_allocation_posterior_matches_marginal_likelihood():
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.5], sigma2=[1.0, 3.24])
    a = np.array([1.2, 0.7])
    b = np.array([0.3, -0.4])
    x = np.array([0.5, -1.1])
    # x + b = a θ + ε, so under component k: x + b ~ N(a μ_k, I + σ²_k a aᵀ)
    y = x + b
    brute = np.array([
        mixture.p[k] * stats.multivariate_normal.pdf(y, a * mixture.mu[k], np.eye(2) + mixture.sigma2[k] * np.outer(a, a))
        for k in range(2)
    ])
    brute /= brute.sum()
    probs, mean, precision = allocation_posterior(np.array([a @ a]), np.array([a @ y]), mixture)
    np.testing.assert_allclose(probs[0], brute, rtol=1e-10)
    np.testing.assert_allclose(precision[0], 1 / mixture.sigma2 + a @ a)
    np.testing.assert_allclose(mean[0], (mixture.mu / mixture.sigma2 + a @ y) / precision[0])


def test_allocation_frequencies_match_posterior(rng):
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.5], sigma2=[1.0, 3.24])
    items = ItemParameters(a=[1.2, 0.7], b=[0.3, -0.4], c=[0.0, 0.0])
    X = np.tile([0.5, -1.1], (N, 1))
    responses = ResponseMatrix(values=np.ones((N, 2)), observed=np.ones((N, 2), bool))
    _, W = update_theta_W(X, np.zeros((N, 2), bool), responses, items, mixture, rng)
    a, y = items.a, X[0] + items.b
    probs, _, _ = allocation_posterior(np.array([a @ a]), np.array([a @ y]), mixture)
    assert np.mean(W == 1) == pytest.approx(probs[0, 1], abs=0.006)


def test_allocation_posterior_survives_extreme_values():
    mixture = MixtureParameters(p=[0.6, 0.4], mu=[0.0, 300.0], sigma2=[1.0, 1e12])
    probs, _, _ = allocation_posterior(np.array([0.0, 40.0]), np.array([0.0, 4e4]), mixture)
    assert np.all(np.isfinite(probs))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)


# ── (a, b) ──

THETA_AB = np.array([-1.0, 0.5, 1.5])
X_AB = np.array([-0.8, 0.3, 1.9])


def _tiled_item_block(n_items, guessed=False):
    X = np.tile(X_AB[:, None], (1, n_items))
    Z = np.full(X.shape, guessed)
    responses = ResponseMatrix(values=np.ones(X.shape), observed=np.ones(X.shape, bool))
    return X, Z, responses


def test_ab_matches_grid_posterior(rng):
    priors = PriorSpec(mu_a=1.0, sigma2_a=9.0, mu_b=0.0, sigma2_b=100.0)
    X, Z, responses = _tiled_item_block(N)
    a, b, stats_ab = update_ab(X, Z, THETA_AB, responses, priors, rng)
    assert np.all(a > 0)

    A, B = np.meshgrid(np.linspace(0.0, 5.0, 1001), np.linspace(-4.0, 4.0, 1001), indexing='ij')
    log_post = (
        -0.5 * sum((x - (A * t - B)) ** 2 for x, t in zip(X_AB, THETA_AB))
        - 0.5 * (A - 1.0) ** 2 / 9.0
        - 0.5 * B ** 2 / 100.0
    )
    (a_mean, a_sd), (b_mean, b_sd) = _grid_moments(log_post, A, B)
    assert a.mean() == pytest.approx(a_mean, abs=0.01)
    assert b.mean() == pytest.approx(b_mean, abs=0.01)
    assert a.std() == pytest.approx(a_sd, abs=0.01)
    assert b.std() == pytest.approx(b_sd, abs=0.01)
    # Roughly 3% of the untruncated posterior lies below a = 0.
    assert 0.9 < stats_ab.acceptance_rate < 0.999


def test_ab_without_informative_cells_is_prior(rng):
    priors = PriorSpec(mu_a=1.0, sigma2_a=9.0, mu_b=0.0, sigma2_b=100.0)
    X, Z, responses = _tiled_item_block(N, guessed=True)
    a, b, _ = update_ab(np.zeros_like(X), Z, THETA_AB, responses, priors, rng)
    expected_a = stats.truncnorm.mean(-1.0 / 3.0, np.inf, loc=1.0, scale=3.0)
    assert a.mean() == pytest.approx(expected_a, abs=0.05)
    assert b.mean() == pytest.approx(0.0, abs=0.15)
    assert b.std() == pytest.approx(10.0, abs=0.15)


def test_ab_logs_thin_items_once_per_call(rng, caplog):
    X, Z, responses = _tiled_item_block(12, guessed=True)
    with BlockExecutor(workers=1, chunk_size=1) as executor, caplog.at_level(logging.DEBUG, logger='engine.gibbs'):
        update_ab(np.zeros_like(X), Z, THETA_AB, responses, PriorSpec(), rng, executor=executor)
    thin = [r for r in caplog.records if r.name == 'engine.gibbs' and 'informative cells' in r.getMessage()]
    assert len(thin) == 1
    assert thin[0].getMessage().startswith('12 of 12 items')


def test_ab_sharp_prior_accepts_nearly_always(rng):
    priors = PriorSpec(mu_a=1.0, sigma2_a=0.01)
    X, Z, responses = _tiled_item_block(2000)
    _, _, stats_ab = update_ab(X, Z, THETA_AB, responses, priors, rng)
    assert stats_ab.acceptance_rate > 0.99


def test_ab_exhausted_budget_names_item(rng):
    priors = PriorSpec(mu_a=-30.0, sigma2_a=1.0)
    X, Z, responses = _tiled_item_block(3, guessed=True)
    with pytest.raises(SamplingError, match='item 1') as info:
        update_ab(X, Z, THETA_AB, responses, priors, rng, max_attempts=50)
    assert info.value.report['acceptance_rate'] == 0.0


def test_ab_one_parameter_model(rng):
    priors = PriorSpec(mu_b=0.0, sigma2_b=100.0)
    X, Z, responses = _tiled_item_block(N)
    a, b, stats_ab = update_ab(X, Z, THETA_AB, responses, priors, rng, fixed_discrimination=True)
    precision = 0.01 + 3
    assert np.all(a == 1.0)
    assert b.mean() == pytest.approx(np.sum(THETA_AB - X_AB) / precision, abs=0.01)
    assert b.var() == pytest.approx(1 / precision, abs=0.01)
    assert stats_ab.proposals == 0


# ── c ──

def _guessing_block(n_items, n_guessed=10, J=100):
    Z = np.zeros((J, n_items), bool)
    Z[:n_guessed] = True
    responses = ResponseMatrix(values=np.ones((J, n_items)), observed=np.ones((J, n_items), bool))
    return Z, responses


def test_c_matches_grid_posterior(rng):
    Z, responses = _guessing_block(5000)
    c = update_c(Z, responses, PriorSpec(alpha_c=4.0, beta_c=12.0), rng)
    grid = np.linspace(1e-6, 1 - 1e-6, 20001)
    log_post = 10 * np.log(grid) + 90 * np.log1p(-grid) + stats.beta.logpdf(grid, 4, 12)
    ((mean, sd),) = _grid_moments(log_post, grid)
    assert mean == pytest.approx(14 / 116, abs=1e-4)
    assert c.mean() == pytest.approx(mean, abs=0.003)
    assert c.std() == pytest.approx(sd, abs=0.003)


def test_c_truncated_prior_keeps_draws_inside(rng):
    Z, responses = _guessing_block(2000, n_guessed=5)
    c = update_c(Z, responses, PriorSpec(c_lower=0.0, c_upper=0.15), rng)
    assert np.all((c > 0) & (c < 0.15))


def test_c_negligible_mass_names_item(rng):
    Z, responses = _guessing_block(4, n_guessed=0)
    priors = PriorSpec(alpha_c=1.0, beta_c=1000.0, c_lower=0.9, c_upper=0.95)
    with pytest.raises(SamplingError, match='item 1') as info:
        update_c(Z, responses, priors, rng)
    assert info.value.report['item'] == 1


def test_c_ignores_missing_cells(rng):
    Z, _ = _guessing_block(3000, n_guessed=50)
    observed = np.ones(Z.shape, bool)
    observed[:50, 1:] = False  # guessed cells are missing except in item 1
    responses = ResponseMatrix(values=np.ones(Z.shape), observed=observed)
    c = update_c(Z, responses, PriorSpec(alpha_c=4.0, beta_c=12.0), rng)
    assert c[1:].mean() == pytest.approx(stats.beta.mean(4, 62), abs=0.003)


# ── (μ, σ²) ──

MEMBERS = np.array([1.2, 2.0, 2.6, 3.1, 1.7])


def test_component_posterior_parameters():
    priors = PriorSpec(nig_m=(0.0, 0.0), nig_beta=0.5, nig_d=6.0, nig_e=3.0)
    theta = np.concatenate([[0.1, -0.4], MEMBERS])
    W = np.array([0, 0, 1, 1, 1, 1, 1])
    m_star, beta_star, d_star, e_star = component_posterior(theta, W, 2, priors)
    assert beta_star[0] == pytest.approx(5.5)
    assert m_star[0] == pytest.approx(10.6 / 5.5)
    assert d_star[0] == pytest.approx(8.5)
    assert e_star[0] == pytest.approx(3 + 0.5 * 2.228 + 0.5 * 5 * 0.5 * 2.12 ** 2 / 5.5)


def test_nig_posterior_matches_grid(rng):
    priors = PriorSpec(nig_m=(0.0, 0.0), nig_beta=0.5, nig_d=6.0, nig_e=3.0)
    W = np.ones(MEMBERS.size, dtype=int)
    m_star, beta_star, d_star, e_star = component_posterior(MEMBERS, W, 2, priors)
    mu, sigma2 = sample_nig(np.full(N, m_star[0]), beta_star[0], d_star[0], e_star[0], rng)

    M, S2 = np.meshgrid(np.linspace(-1.0, 5.0, 1201), np.linspace(0.01, 4.0, 1200), indexing='ij')
    log_post = (
        sum(stats.norm.logpdf(t, M, np.sqrt(S2)) for t in MEMBERS)
        + stats.norm.logpdf(M, 0.0, np.sqrt(S2 / 0.5))
        + stats.invgamma.logpdf(S2, 6.0, scale=3.0)
    )
    (mu_mean, mu_sd), (s2_mean, s2_sd) = _grid_moments(log_post, M, S2)
    assert mu.mean() == pytest.approx(mu_mean, abs=0.01)
    assert mu.std() == pytest.approx(mu_sd, abs=0.01)
    assert sigma2.mean() == pytest.approx(s2_mean, abs=0.01)
    assert sigma2.std() == pytest.approx(s2_sd, abs=0.01)


def test_empty_component_draws_from_prior():
    priors = PriorSpec(nig_m=(0.0, 1.0), nig_beta=1.0, nig_d=3.0, nig_e=2.0)
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.0], sigma2=[1.0, 1.0])
    theta = np.array([0.2, -0.3, 1.1])
    W = np.zeros(3, dtype=int)
    draws = []
    root = RngStream(5)
    for t in range(4000):
        drawn, W_out = update_mu_sigma(theta, W, mixture, priors, root.substream(t))
        assert (drawn.mu[0], drawn.sigma2[0]) == (0.0, 1.0)
        draws.append((drawn.mu[1], drawn.sigma2[1]))
    mu, sigma2 = np.array(draws).T
    np.testing.assert_array_equal(W_out, W)
    # μ ~ N(1, σ²), σ² ~ IG(3, 2): E[σ²] = 1, Var[μ] = 1
    assert mu.mean() == pytest.approx(1.0, abs=0.07)
    assert sigma2.mean() == pytest.approx(1.0, abs=0.07)


def test_huge_prior_weight_pins_component_mean():
    priors = PriorSpec(nig_m=(0.0, 1.5), nig_beta=1e8, nig_d=2.0, nig_e=1.0)
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.5], sigma2=[1.0, 1.0])
    theta = np.array([0.0, 0.4, 2.2, 3.0])
    W = np.array([0, 0, 1, 1])
    root = RngStream(6)
    mu = [update_mu_sigma(theta, W, mixture, priors, root.substream(t))[0].mu[1] for t in range(200)]
    assert np.std(mu) < 1e-3
    assert np.mean(mu) == pytest.approx(1.5, abs=1e-3)


def test_relabel_sorts_free_components():
    mixture = MixtureParameters(p=[0.6, 0.3, 0.1], mu=[0.0, 2.0, -1.0], sigma2=[1.0, 0.5, 2.0])
    relabeled, W = relabel_components(mixture, np.array([0, 1, 2, 1]))
    np.testing.assert_array_equal(relabeled.mu, [0.0, -1.0, 2.0])
    np.testing.assert_array_equal(relabeled.p, [0.6, 0.1, 0.3])
    np.testing.assert_array_equal(relabeled.sigma2, [1.0, 2.0, 0.5])
    np.testing.assert_array_equal(W, [0, 2, 1, 2])


def test_mu_sigma_is_noop_for_single_component(rng):
    mixture = MixtureParameters.standard_normal()
    W = np.zeros(4, dtype=int)
    out, W_out = update_mu_sigma(np.zeros(4), W, mixture, PriorSpec().for_components(1), rng)
    assert out is mixture
    assert W_out is W


# ── p ──

def test_weights_acceptable_rules():
    assert weights_acceptable(np.array([0.51, 0.49]), 'p1_gt_half')
    assert not weights_acceptable(np.array([0.5, 0.5]), 'p1_gt_half')
    assert weights_acceptable(np.array([0.4, 0.3, 0.3]), 'p1_largest')
    assert not weights_acceptable(np.array([0.3, 0.4, 0.3]), 'p1_largest')


def test_p_concentrated_counts_accept_almost_always():
    priors = PriorSpec().for_components(2)
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.0], sigma2=[1.0, 1.0])
    W = np.zeros(10, dtype=int)
    root = RngStream(8)
    total = BlockStats()
    p1 = []
    for t in range(2000):
        drawn, stats_p = update_p(W, mixture, priors, root.substream(t))
        total += stats_p
        p1.append(drawn.p[0])
    assert total.acceptance_rate > 0.99
    assert np.mean(p1) == pytest.approx(12 / 13, abs=0.01)


def test_p_truncated_posterior_matches_quadrature():
    priors = PriorSpec().for_components(2)
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.0], sigma2=[1.0, 1.0])
    W = np.array([0] * 3 + [1] * 5)
    root = RngStream(9)
    total = BlockStats()
    p1 = []
    for t in range(20_000):
        drawn, stats_p = update_p(W, mixture, priors, root.substream(t))
        total += stats_p
        p1.append(drawn.p[0])
    # Dirichlet(5, 6) restricted to p1 > 0.5
    mass = stats.beta.sf(0.5, 5, 6)
    expected = integrate.quad(lambda x: x * stats.beta.pdf(x, 5, 6), 0.5, 1.0)[0] / mass
    assert min(p1) > 0.5
    assert np.mean(p1) == pytest.approx(expected, abs=0.005)
    assert total.acceptance_rate == pytest.approx(mass, abs=0.02)


def test_p_exhausted_budget_reports_dirichlet(rng):
    priors = PriorSpec().for_components(2)
    mixture = MixtureParameters(p=[0.7, 0.3], mu=[0.0, 1.0], sigma2=[1.0, 1.0])
    with pytest.raises(SamplingError) as info:
        update_p(np.ones(200, dtype=int), mixture, priors, rng, max_attempts=100)
    assert info.value.report['dirichlet'] == [2.0, 201.0]


def test_p_largest_rule(rng):
    priors = PriorSpec().for_components(3)
    mixture = MixtureParameters(p=[0.5, 0.3, 0.2], mu=[0.0, 1.0, 2.0], sigma2=[1.0, 1.0, 1.0])
    W = np.array([0] * 4 + [1] * 3 + [2] * 3)
    drawn, _ = update_p(W, mixture, priors, rng, weight_rule='p1_largest')
    assert drawn.p[0] >= drawn.p[1:].max()
    np.testing.assert_array_equal(drawn.mu, mixture.mu)
