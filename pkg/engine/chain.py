"""
Chain Driver — Initialization, the sweep loop and retained-draw storage.

One sweep runs the six blocks of ``engine.gibbs`` in fixed order.  Sweep
``t`` (1-based) draws from ``RngStream(seed, stream_id).substream(t, b)``
for block ``b``; initialization uses ``substream(0, ...)``.  Burn-in and
thinning are applied at retention time only.

Usage:
    from engine.chain import SamplerConfig, run_chain
    chain = run_chain(responses, PriorSpec(), K=2, config=SamplerConfig(iterations=2000, burn_in=1000))
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from core.errors import DomainError, MixIrtError, SamplerError
from core.rng import RngStream
from core.state_registry import SAMPLER_DEFAULTS
from core.distributions import sample_nig
from engine.block_executor import SEQUENTIAL, BlockExecutor
from engine.gibbs import (
    BLOCK_ORDER,
    BlockStats,
    update_ab,
    update_c,
    update_mu_sigma,
    update_p,
    update_theta_W,
    update_ZX,
)
from engine.progress_dashboard import ProgressReporter
from model.evaluation import mixture_mean, mixture_sd, rescale_draw
from model.state import (
    AugmentedState,
    ItemParameters,
    MixtureParameters,
    ModelOptions,
    PriorSpec,
    RescaleSpec,
    ResponseMatrix,
)

logger = logging.getLogger(__name__)

# Box that initial (μ_k, σ²_k) prior draws are clipped into.
START_MU_RANGE = (-4.0, 4.0)
START_SIGMA2_RANGE = (0.1, 10.0)

INITIAL_P1_FLOOR = 0.6

_WRAPPED_ERRORS = (MixIrtError, ValueError, FloatingPointError, np.linalg.LinAlgError)


# ═══════════════════════════════════════════════
# Configuration
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = SAMPLER_DEFAULTS['iterations']
    burn_in: int = SAMPLER_DEFAULTS['burn_in']
    thin: int = SAMPLER_DEFAULTS['thin']
    seed: int = SAMPLER_DEFAULTS['seed']
    parallel_workers: int = 1
    rejection_max_attempts: int = SAMPLER_DEFAULTS['rejection_max_attempts']
    chunk_size: int = SAMPLER_DEFAULTS['chunk_size']
    progress_every: int = SAMPLER_DEFAULTS['progress_every']
    stream_id: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError(f"iterations must be at least 1, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise DomainError(f"burn_in must satisfy 0 <= burn_in < iterations, got {self.burn_in} / {self.iterations}")
        if self.thin < 1:
            raise DomainError(f"thin must be at least 1, got {self.thin}")
        if self.parallel_workers < 1:
            raise DomainError(f"parallel_workers must be at least 1, got {self.parallel_workers}")
        if self.rejection_max_attempts < 1:
            raise DomainError(f"rejection_max_attempts must be at least 1, got {self.rejection_max_attempts}")
        if self.chunk_size < 1:
            raise DomainError(f"chunk_size must be at least 1, got {self.chunk_size}")
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def retains(self, iteration: int) -> bool:
        """Whether sweep ``iteration`` (1-based) is kept."""
        return iteration > self.burn_in and (iteration - self.burn_in) % self.thin == 0

    def to_dict(self) -> dict:
        return asdict(self)


# ═══════════════════════════════════════════════
# State and output
# ═══════════════════════════════════════════════

@dataclass
class ChainState:
    """Everything one sweep reads and writes."""
    items: ItemParameters
    mixture: MixtureParameters
    theta: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    W: np.ndarray

    def augmented(self) -> AugmentedState:
        return AugmentedState(theta=self.theta, Z=self.Z, X=self.X, W=self.W)


@dataclass
class ChainCounters:
    """Proposal/rejection counts of the two rejection-sampled blocks."""
    ab: BlockStats = field(default_factory=BlockStats)
    p: BlockStats = field(default_factory=BlockStats)

    def acceptance_rates(self) -> dict[str, float]:
        return {'ab': self.ab.acceptance_rate, 'p': self.p.acceptance_rate}

    def to_dict(self) -> dict:
        return {
            'ab_proposals': self.ab.proposals,
            'ab_rejections': self.ab.rejections,
            'p_proposals': self.p.proposals,
            'p_rejections': self.p.rejections,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChainCounters":
        return cls(
            ab=BlockStats(int(data.get('ab_proposals', 0)), int(data.get('ab_rejections', 0))),
            p=BlockStats(int(data.get('p_proposals', 0)), int(data.get('p_rejections', 0))),
        )


@dataclass
class ChainOutput:
    """Retained draws, one row per kept sweep.

    Item arrays are (R, I), mixture arrays (R, K), ``theta`` is (R, J) and
    ``iterations`` holds the 1-based sweep index of every row.
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    p: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    theta: np.ndarray
    iterations: np.ndarray
    config: SamplerConfig
    options: ModelOptions
    priors: PriorSpec = field(default_factory=PriorSpec)
    counters: ChainCounters = field(default_factory=ChainCounters)
    item_names: tuple[str, ...] = ()
    elapsed_seconds: float = 0.0

    def __post_init__(self):
        R = self.iterations.shape[0]
        for name in ('a', 'b', 'c', 'p', 'mu', 'sigma2', 'theta'):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != R:
                raise DomainError(f"draw array {name} has shape {arr.shape}, expected {R} rows")
        if not self.a.shape == self.b.shape == self.c.shape:
            raise DomainError("item draw arrays differ in shape")
        if not self.p.shape == self.mu.shape == self.sigma2.shape:
            raise DomainError("mixture draw arrays differ in shape")
        if not self.item_names:
            self.item_names = tuple(f"item_{i + 1}" for i in range(self.I))

    @property
    def n_retained(self) -> int:
        return self.iterations.shape[0]

    @property
    def K(self) -> int:
        return self.p.shape[1]

    @property
    def I(self) -> int:
        return self.a.shape[1]

    @property
    def J(self) -> int:
        return self.theta.shape[1]

    def mixture_draw(self, r: int) -> MixtureParameters:
        return MixtureParameters(p=self.p[r], mu=self.mu[r], sigma2=self.sigma2[r])

    def items_draw(self, r: int) -> ItemParameters:
        return ItemParameters(a=self.a[r], b=self.b[r], c=self.c[r])

    def mixture_mean_draws(self) -> np.ndarray:
        return np.array([mixture_mean(self.mixture_draw(r)) for r in range(self.n_retained)])

    def mixture_sd_draws(self) -> np.ndarray:
        return np.array([mixture_sd(self.mixture_draw(r)) for r in range(self.n_retained)])

    def theta_posterior_mean(self) -> np.ndarray:
        return self.theta.mean(axis=0)

    def rescaled_theta(self, spec: RescaleSpec) -> np.ndarray:
        """θ draws mapped per iteration to mean ``spec.m`` and sd ``spec.s``."""
        return np.vstack([rescale_draw(self.theta[r], self.mixture_draw(r), spec) for r in range(self.n_retained)])

    def acceptance_rates(self) -> dict[str, float]:
        return self.counters.acceptance_rates()


# ═══════════════════════════════════════════════
# Initialization
# ═══════════════════════════════════════════════

def standardized_raw_scores(responses: ResponseMatrix) -> np.ndarray:
    """Z-scored proportion correct over each individual's observed items.

    All-equal scores map to 0.
    """
    correct = (responses.values * responses.observed).sum(axis=1)
    proportion = correct / responses.observed.sum(axis=1)
    sd = proportion.std()
    if not sd > 0:
        return np.zeros(responses.J)
    return (proportion - proportion.mean()) / sd


def initial_mixture(priors: PriorSpec, K: int, rng: RngStream) -> MixtureParameters:
    """Starting weights, plus prior draws for components 2..K clipped and sorted."""
    if K == 1:
        return MixtureParameters.standard_normal()
    alphas = np.asarray(priors.alphas, dtype=float)
    p1 = max(INITIAL_P1_FLOOR, alphas[0] / alphas.sum())
    p = np.concatenate([[p1], np.full(K - 1, (1.0 - p1) / (K - 1))])

    mu_raw, s2_raw = sample_nig(np.asarray(priors.nig_m[1:]), priors.nig_beta, priors.nig_d, priors.nig_e, rng)
    mu = np.clip(mu_raw, *START_MU_RANGE)
    s2 = np.clip(s2_raw, *START_SIGMA2_RANGE)
    clipped = int(np.sum((mu != mu_raw) | (s2 != s2_raw)))
    if clipped:
        logger.info(f"Clipped {clipped} initial component draw(s) into mu {START_MU_RANGE}, sigma2 {START_SIGMA2_RANGE}")
    order = np.argsort(mu, kind='stable')
    mu, s2 = mu[order], s2[order]
    if np.any(np.diff(mu) <= 0):
        # Clipping can tie the means; ordering of components 2..K must be strict.
        mu = np.linspace(*START_MU_RANGE, K + 1)[1:-1]
        logger.info(f"Initial component means tied after clipping; spread to {np.round(mu, 3).tolist()}")
    return MixtureParameters(
        p=p,
        mu=np.concatenate([[0.0], mu]),
        sigma2=np.concatenate([[1.0], s2]),
    )


def initialize(
    responses: ResponseMatrix,
    priors: PriorSpec,
    K: int | ModelOptions,
    rng: RngStream,
    executor: BlockExecutor = SEQUENTIAL,
) -> ChainState:
    """Starting state: raw-score abilities, neutral items, everyone in component 1."""
    options = K if isinstance(K, ModelOptions) else ModelOptions(K=K)
    priors = priors.for_components(options.K)
    I = responses.I
    c0 = priors.c_prior_mean() if options.has_guessing else 0.0
    items = ItemParameters(a=np.ones(I), b=np.zeros(I), c=np.full(I, c0))
    mixture = initial_mixture(priors, options.K, rng.substream(0))
    theta = standardized_raw_scores(responses)
    Z, X = update_ZX(responses, items, theta, rng.substream(1), executor)
    return ChainState(
        items=items,
        mixture=mixture,
        theta=theta,
        Z=Z,
        X=X,
        W=np.zeros(responses.J, dtype=np.int64),
    )


# ═══════════════════════════════════════════════
# Sweep
# ═══════════════════════════════════════════════

def sweep(
    state: ChainState,
    responses: ResponseMatrix,
    priors: PriorSpec,
    options: ModelOptions,
    rng: RngStream,
    *,
    iteration: int = 0,
    max_attempts: int = SAMPLER_DEFAULTS['rejection_max_attempts'],
    executor: BlockExecutor = SEQUENTIAL,
) -> tuple[ChainState, ChainCounters]:
    """One full sweep in block order; ``priors`` must already match K.

    A failing block is re-raised as ``SamplerError`` carrying the block
    name and ``iteration``.
    """
    counters = ChainCounters()
    block = BLOCK_ORDER[0]

    def stream(name: str) -> RngStream:
        nonlocal block
        block = name
        return rng.substream(BLOCK_ORDER.index(name) + 1)

    try:
        Z, X = update_ZX(responses, state.items, state.theta, stream('ZX'), executor)

        theta, W = update_theta_W(X, Z, responses, state.items, state.mixture, stream('theta_W'), executor)

        a, b, counters.ab = update_ab(
            X, Z, theta, responses, priors, stream('ab'),
            max_attempts=max_attempts,
            fixed_discrimination=options.fixed_discrimination,
            executor=executor,
        )

        if options.has_guessing:
            c = update_c(Z, responses, priors, stream('c'), executor)
        else:
            block = 'c'
            c = np.zeros(responses.I)
        items = ItemParameters(a=a, b=b, c=c)

        mixture, W = update_mu_sigma(theta, W, state.mixture, priors, stream('mu_sigma2'))

        mixture, counters.p = update_p(
            W, mixture, priors, stream('p'),
            max_attempts=max_attempts,
            weight_rule=options.weight_rule,
        )
    except SamplerError:
        raise
    except _WRAPPED_ERRORS as exc:
        raise SamplerError(block, iteration, exc) from exc

    return ChainState(items=items, mixture=mixture, theta=theta, Z=Z, X=X, W=W), counters


# ═══════════════════════════════════════════════
# Driver
# ═══════════════════════════════════════════════

def run_chain(
    responses: ResponseMatrix,
    priors: PriorSpec,
    K: int,
    config: SamplerConfig,
    *,
    item_model: str = '3pno',
    weight_rule: str = 'p1_gt_half',
    progress: Optional[ProgressReporter] = None,
) -> ChainOutput:
    """Initialize, run ``config.iterations`` sweeps and collect retained draws.

    Sequential and parallel runs with the same config give identical output.
    """
    options = ModelOptions(K=K, item_model=item_model, weight_rule=weight_rule)
    priors = priors.for_components(K)
    root = RngStream(config.seed, config.stream_id)
    R = config.n_retained
    logger.info(
        f"Running K={K} {item_model} chain on {responses.J}x{responses.I} responses: "
        f"{config.iterations} sweeps, burn-in {config.burn_in}, thin {config.thin}, "
        f"{config.parallel_workers} worker(s), seed {config.seed}"
    )

    draws = {
        'a': np.empty((R, responses.I)), 'b': np.empty((R, responses.I)), 'c': np.empty((R, responses.I)),
        'p': np.empty((R, K)), 'mu': np.empty((R, K)), 'sigma2': np.empty((R, K)),
        'theta': np.empty((R, responses.J)),
    }
    kept_iterations = np.empty(R, dtype=np.int64)
    totals = ChainCounters()
    reporter = progress or ProgressReporter(total=config.iterations, every=config.progress_every)
    started = time.monotonic()

    with BlockExecutor(config.parallel_workers, config.chunk_size) as executor:
        try:
            state = initialize(responses, priors, options, root.substream(0), executor)
        except SamplerError:
            raise
        except _WRAPPED_ERRORS as exc:
            raise SamplerError('initialize', 0, exc) from exc

        r = 0
        for t in range(1, config.iterations + 1):
            state, counters = sweep(
                state, responses, priors, options, root.substream(t),
                iteration=t,
                max_attempts=config.rejection_max_attempts,
                executor=executor,
            )
            totals.ab += counters.ab
            totals.p += counters.p

            if config.retains(t):
                problems = state.mixture.identification_problems(weight_rule)
                if problems:
                    raise SamplerError('retention', t, DomainError("; ".join(problems)))
                draws['a'][r], draws['b'][r], draws['c'][r] = state.items.a, state.items.b, state.items.c
                draws['p'][r], draws['mu'][r], draws['sigma2'][r] = state.mixture.p, state.mixture.mu, state.mixture.sigma2
                draws['theta'][r] = state.theta
                kept_iterations[r] = t
                r += 1

            reporter.update(
                t,
                phase='burn-in' if t <= config.burn_in else 'sampling',
                p1=float(state.mixture.p[0]) if K > 1 else None,
                acceptance=totals.acceptance_rates(),
            )

    elapsed = time.monotonic() - started
    rates = totals.acceptance_rates()
    logger.info(
        f"Chain finished in {elapsed:.1f}s: {R} draws retained, "
        f"acceptance a>0 {rates['ab']:.4f}, weight rule {rates['p']:.4f}"
    )
    return ChainOutput(
        **draws,
        iterations=kept_iterations,
        config=config,
        options=options,
        priors=priors,
        counters=totals,
        item_names=responses.item_names,
        elapsed_seconds=elapsed,
    )
