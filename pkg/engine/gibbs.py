"""
Gibbs Blocks — The six full-conditional updates of the MixIRT sampler.

Sweep order (one iteration):

    1. (X, Z)        update_ZX
    2. (θ, W)        update_theta_W
    3. (a, b)        update_ab
    4. c             update_c
    5. (μ, σ²)       update_mu_sigma   (components 2..K, then relabel)
    6. p             update_p

Every conditional is derived from the augmented joint density with
X_ij | Z_ij = 0 ~ N(a_i θ_j − b_i, 1).  Only observed cells enter any sum.
Blocks 1–4 are conditionally independent across individuals or items and
run through a ``BlockExecutor``; blocks 5–6 are tiny and sequential.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import special

from core.distributions import (
    Side,
    sample_beta,
    sample_beta_truncated,
    sample_bivariate_normal_batch,
    sample_categorical_rows,
    sample_dirichlet,
    sample_nig,
    sample_truncated_normal,
)
from core.errors import NumericalError, SamplingError
from core.rng import RngStream
from engine.block_executor import SEQUENTIAL, BlockExecutor
from model.state import ItemParameters, MixtureParameters, PriorSpec, ResponseMatrix

logger = logging.getLogger(__name__)

BLOCK_ORDER = ('ZX', 'theta_W', 'ab', 'c', 'mu_sigma2', 'p')


@dataclass
class BlockStats:
    """Proposal/rejection counts of a rejection-sampled block."""

    proposals: int = 0
    rejections: int = 0

    def __add__(self, other: "BlockStats") -> "BlockStats":
        return BlockStats(self.proposals + other.proposals, self.rejections + other.rejections)

    @property
    def acceptance_rate(self) -> float:
        return 1.0 if self.proposals == 0 else 1.0 - self.rejections / self.proposals


# ═══════════════════════════════════════════════
# Block 1: (X, Z)
# ═══════════════════════════════════════════════

def guessing_weight(m: np.ndarray, c: np.ndarray) -> np.ndarray:
    """P(Z = 1 | Y = 1) = c / (c + (1 − c)Φ(m))."""
    return c / (c + (1.0 - c) * special.ndtr(m))


def update_ZX(
    responses: ResponseMatrix,
    items: ItemParameters,
    theta: np.ndarray,
    rng: RngStream,
    executor: BlockExecutor = SEQUENTIAL,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw the guessing indicators and latent responses cell by cell."""
    Z = np.zeros((responses.J, responses.I), dtype=bool)
    X = np.zeros((responses.J, responses.I))
    a, b, c = items.a, items.b, items.c

    def work(rows: slice, chunk_rng: RngStream) -> None:
        m = theta[rows, None] * a[None, :] - b[None, :]
        observed = responses.observed[rows]
        correct = observed & (responses.values[rows] == 1)
        with np.errstate(invalid='ignore', divide='ignore'):
            w = np.where(c[None, :] > 0, guessing_weight(m, c[None, :]), 0.0)
        u = chunk_rng.generator.random(m.shape)
        z = correct & (u < w)
        above = correct & ~z
        below = observed & ~correct
        x = np.zeros_like(m)
        if above.any():
            x[above] = sample_truncated_normal(m[above], 1.0, Side.ABOVE_ZERO, chunk_rng)
        if below.any():
            x[below] = sample_truncated_normal(m[below], 1.0, Side.BELOW_ZERO, chunk_rng)
        Z[rows] = z
        X[rows] = x

    executor.run(responses.J, work, rng)
    return Z, X


# ═══════════════════════════════════════════════
# Block 2: (θ, W)
# ═══════════════════════════════════════════════

def allocation_posterior(
    S: np.ndarray,
    R: np.ndarray,
    mixture: MixtureParameters,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Allocation probabilities and per-component θ posteriors.

    ``S_j = Σ a_i²`` and ``R_j = Σ a_i (x_ij + b_i)`` over the informative
    cells of individual j.  Returns ``(probs, means, precisions)``, each
    of shape (n, K).  Weights are normalized in log space.
    """
    mu, s2 = mixture.mu[None, :], mixture.sigma2[None, :]
    precision = 1.0 / s2 + S[:, None]
    mean = (mu / s2 + R[:, None]) / precision
    with np.errstate(divide='ignore'):
        log_p = np.log(mixture.p)[None, :]
    log_w = log_p - 0.5 * np.log(s2 * precision) - 0.5 * (mu * mu / s2 - mean * mean * precision)
    log_w -= log_w.max(axis=1, keepdims=True)
    probs = np.exp(log_w)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs, mean, precision


def update_theta_W(
    X: np.ndarray,
    Z: np.ndarray,
    responses: ResponseMatrix,
    items: ItemParameters,
    mixture: MixtureParameters,
    rng: RngStream,
    executor: BlockExecutor = SEQUENTIAL,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw each individual's component, then the ability given it."""
    theta = np.empty(responses.J)
    W = np.empty(responses.J, dtype=np.int64)
    a, b = items.a, items.b

    def work(rows: slice, chunk_rng: RngStream) -> None:
        informative = (responses.observed[rows] & ~Z[rows]).astype(float)
        S = informative @ (a * a)
        R = (informative * (X[rows] + b[None, :])) @ a
        probs, mean, precision = allocation_posterior(S, R, mixture)
        k = sample_categorical_rows(probs, chunk_rng)
        pick = np.arange(k.size)
        noise = chunk_rng.generator.standard_normal(k.size)
        theta[rows] = mean[pick, k] + noise / np.sqrt(precision[pick, k])
        W[rows] = k

    executor.run(responses.J, work, rng)
    return theta, W


# ═══════════════════════════════════════════════
# Block 3: (a, b)
# ═══════════════════════════════════════════════

def item_posterior(
    X: np.ndarray,
    informative: np.ndarray,
    theta: np.ndarray,
    priors: PriorSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Bivariate normal posterior of (a_i, b_i) before the a > 0 truncation.

    ``informative`` is the float mask of cells with Z = 0.  Returns
    ``(means, covs)`` of shapes (I, 2) and (I, 2, 2).  The regression is
    x_ij = a_i θ_j − b_i + ε with design row (θ_j, −1).
    """
    n = informative.sum(axis=0)
    s_t = theta @ informative
    s_tt = (theta * theta) @ informative
    weighted_x = informative * X
    s_x = weighted_x.sum(axis=0)
    s_xt = theta @ weighted_x

    p00 = 1.0 / priors.sigma2_a + s_tt
    p01 = -s_t
    p11 = 1.0 / priors.sigma2_b + n
    det = p00 * p11 - p01 * p01
    covs = np.empty((n.size, 2, 2))
    with np.errstate(divide='ignore', invalid='ignore'):
        covs[:, 0, 0] = p11 / det
        covs[:, 1, 1] = p00 / det
        covs[:, 0, 1] = covs[:, 1, 0] = -p01 / det
    h0 = priors.mu_a / priors.sigma2_a + s_xt
    h1 = priors.mu_b / priors.sigma2_b - s_x
    means = np.stack([covs[:, 0, 0] * h0 + covs[:, 0, 1] * h1, covs[:, 1, 0] * h0 + covs[:, 1, 1] * h1], axis=1)
    return means, covs


def update_ab(
    X: np.ndarray,
    Z: np.ndarray,
    theta: np.ndarray,
    responses: ResponseMatrix,
    priors: PriorSpec,
    rng: RngStream,
    *,
    max_attempts: int = 1_000_000,
    fixed_discrimination: bool = False,
    executor: BlockExecutor = SEQUENTIAL,
) -> tuple[np.ndarray, np.ndarray, BlockStats]:
    """Draw (a_i, b_i) from their bivariate normal posterior with a_i > 0.

    The truncation is handled by proposing from the unrestricted normal and
    accepting when a_i > 0.  With ``fixed_discrimination`` a ≡ 1 and only b
    is drawn (one-parameter model).
    """
    a = np.empty(responses.I)
    b = np.empty(responses.I)
    thin_items = int(((responses.observed & ~Z).sum(axis=0) < 2).sum())
    if thin_items:
        logger.debug(f"{thin_items} of {responses.I} items have fewer than 2 informative cells")

    def work(cols: slice, chunk_rng: RngStream) -> BlockStats:
        informative = (responses.observed[:, cols] & ~Z[:, cols]).astype(float)

        if fixed_discrimination:
            precision = 1.0 / priors.sigma2_b + informative.sum(axis=0)
            centre = (priors.mu_b / priors.sigma2_b + (informative * (theta[:, None] - X[:, cols])).sum(axis=0)) / precision
            a[cols] = 1.0
            b[cols] = centre + chunk_rng.generator.standard_normal(centre.size) / np.sqrt(precision)
            return BlockStats()

        means, covs = item_posterior(X[:, cols], informative, theta, priors)
        try:
            draws = sample_bivariate_normal_batch(means, covs, chunk_rng)
        except NumericalError as exc:
            item = cols.start + exc.report['index']
            raise NumericalError(f"item {item + 1}: (a, b) posterior {exc}", report={**exc.report, 'item': item + 1}) from exc

        stats = BlockStats(proposals=draws.shape[0])
        attempts = np.ones(draws.shape[0], dtype=np.int64)
        pending = np.flatnonzero(draws[:, 0] <= 0.0)
        while pending.size:
            stats.rejections += pending.size
            exhausted = pending[attempts[pending] >= max_attempts]
            if exhausted.size:
                item = cols.start + int(exhausted[0])
                raise SamplingError(
                    f"item {item + 1}: a > 0 rejection budget of {max_attempts} proposals exhausted",
                    report={'item': item + 1, 'acceptance_rate': 0.0, 'attempts': int(attempts[exhausted[0]]),
                            'posterior_mean': means[exhausted[0]].tolist()},
                )
            redraw = sample_bivariate_normal_batch(means[pending], covs[pending], chunk_rng)
            attempts[pending] += 1
            stats.proposals += pending.size
            draws[pending] = redraw
            pending = pending[redraw[:, 0] <= 0.0]

        a[cols] = draws[:, 0]
        b[cols] = draws[:, 1]
        return stats

    results = executor.run(responses.I, work, rng)
    return a, b, sum(results, BlockStats())


# ═══════════════════════════════════════════════
# Block 4: c
# ═══════════════════════════════════════════════

def update_c(
    Z: np.ndarray,
    responses: ResponseMatrix,
    priors: PriorSpec,
    rng: RngStream,
    executor: BlockExecutor = SEQUENTIAL,
) -> np.ndarray:
    """Draw each guessing parameter from its (optionally truncated) Beta."""
    c = np.empty(responses.I)
    lower, upper = priors.c_bounds

    def work(cols: slice, chunk_rng: RngStream) -> None:
        observed = responses.observed[:, cols]
        guessed = (Z[:, cols] & observed).sum(axis=0)
        answered = observed.sum(axis=0)
        alpha = guessed + priors.alpha_c
        beta = answered - guessed + priors.beta_c
        if not priors.c_truncated:
            c[cols] = sample_beta(alpha, beta, chunk_rng)
            return
        try:
            c[cols] = sample_beta_truncated(alpha, beta, lower, upper, chunk_rng)
        except SamplingError as exc:
            item = cols.start + exc.report.get('index', 0)
            raise SamplingError(f"item {item + 1}: {exc}", report={**exc.report, 'item': item + 1}) from exc

    executor.run(responses.I, work, rng)
    return c


# ═══════════════════════════════════════════════
# Block 5: (μ, σ²) with relabeling
# ═══════════════════════════════════════════════

def component_posterior(theta: np.ndarray, W: np.ndarray, K: int, priors: PriorSpec):
    """NIG posterior parameters (m*, β*, d*, e*) for components 2..K.

    Prior: σ² ~ IG(d, e), μ | σ² ~ N(m_k, σ²/β).
    """
    m_star, beta_star, d_star, e_star = (np.empty(K - 1) for _ in range(4))
    for k in range(1, K):
        members = theta[W == k]
        n = members.size
        m_prior = priors.nig_m[k]
        beta_star[k - 1] = priors.nig_beta + n
        d_star[k - 1] = priors.nig_d + 0.5 * n
        if n == 0:
            m_star[k - 1] = m_prior
            e_star[k - 1] = priors.nig_e
            continue
        mean = members.mean()
        m_star[k - 1] = (priors.nig_beta * m_prior + members.sum()) / beta_star[k - 1]
        e_star[k - 1] = (
            priors.nig_e
            + 0.5 * np.sum((members - mean) ** 2)
            + 0.5 * n * priors.nig_beta * (mean - m_prior) ** 2 / beta_star[k - 1]
        )
    return m_star, beta_star, d_star, e_star


def relabel_components(mixture: MixtureParameters, W: np.ndarray) -> tuple[MixtureParameters, np.ndarray]:
    """Sort components 2..K by mean; permute p, σ² and W to match."""
    if mixture.K <= 2:
        return mixture, W
    perm = np.concatenate([[0], 1 + np.argsort(mixture.mu[1:], kind='stable')])
    if np.array_equal(perm, np.arange(mixture.K)):
        return mixture, W
    new_label = np.empty(mixture.K, dtype=np.int64)
    new_label[perm] = np.arange(mixture.K)
    relabeled = MixtureParameters(p=mixture.p[perm], mu=mixture.mu[perm], sigma2=mixture.sigma2[perm])
    return relabeled, new_label[W]


def update_mu_sigma(
    theta: np.ndarray,
    W: np.ndarray,
    mixture: MixtureParameters,
    priors: PriorSpec,
    rng: RngStream,
) -> tuple[MixtureParameters, np.ndarray]:
    """Conjugate NIG draws for components 2..K, then the ordering relabel.

    Component 1 stays pinned at (0, 1).
    """
    K = mixture.K
    if K == 1:
        return mixture, W
    m_star, beta_star, d_star, e_star = component_posterior(theta, W, K, priors)
    mu, sigma2 = sample_nig(m_star, beta_star, d_star, e_star, rng)
    drawn = MixtureParameters(
        p=mixture.p,
        mu=np.concatenate([[0.0], mu]),
        sigma2=np.concatenate([[1.0], sigma2]),
    )
    return relabel_components(drawn, W)


# ═══════════════════════════════════════════════
# Block 6: p
# ═══════════════════════════════════════════════

def weights_acceptable(p: np.ndarray, weight_rule: str) -> bool:
    if p.size == 1:
        return True
    if weight_rule == 'p1_largest':
        return bool(p[0] >= p[1:].max())
    return bool(p[0] > 0.5)


def update_p(
    W: np.ndarray,
    mixture: MixtureParameters,
    priors: PriorSpec,
    rng: RngStream,
    *,
    max_attempts: int = 1_000_000,
    weight_rule: str = 'p1_gt_half',
) -> tuple[MixtureParameters, BlockStats]:
    """Draw the weights from their Dirichlet posterior under the weight rule."""
    K = mixture.K
    if K == 1:
        return mixture, BlockStats()
    posterior = np.bincount(W, minlength=K)[:K] + np.asarray(priors.alphas, dtype=float)
    stats = BlockStats()
    while stats.proposals < max_attempts:
        p = sample_dirichlet(posterior, rng)
        stats.proposals += 1
        if weights_acceptable(p, weight_rule):
            return MixtureParameters(p=p, mu=mixture.mu, sigma2=mixture.sigma2), stats
        stats.rejections += 1
    raise SamplingError(
        f"weight rule {weight_rule} rejected {max_attempts} Dirichlet proposals; "
        f"the restriction looks inconsistent with the allocations",
        report={'dirichlet': posterior.tolist(), 'attempts': max_attempts, 'acceptance_rate': 0.0},
    )
