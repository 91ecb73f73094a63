"""
Simulation — Synthetic 3PNO responses with normal-mixture abilities.

Generates the simulation-study datasets (and anything else a preset or a
test asks for): abilities from a mixture, item parameters from the
fitting priors, Bernoulli responses through the ICC, then cells masked
uniformly at random.

Every draw comes from ``RngStream(design.seed, SIMULATION_STREAM)`` so a
design always reproduces the same dataset.

Usage:
    from simulation import SimulationDesign, simulate_dataset
    design = SimulationDesign(J=2000, I=40, mixture=MixtureParameters([0.8, 0.2], [0, 2.5], [1, 0.25]))
    responses, truth = simulate_dataset(design)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from core.distributions import Side, sample_beta_truncated, sample_dirichlet, sample_nig, sample_truncated_normal
from core.errors import DomainError, SamplingError
from core.rng import RngStream
from engine.gibbs import weights_acceptable
from model.evaluation import icc
from model.state import ItemParameters, MixtureParameters, ModelOptions, PriorSpec, ResponseMatrix

logger = logging.getLogger(__name__)

SIMULATION_STREAM = 1
_PRIOR_WEIGHT_ATTEMPTS = 100_000


# ═══════════════════════════════════════════════
# Design
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class ItemGenerator:
    """Distributions the true item parameters are drawn from.

    Defaults are the fitting priors: a ~ N(1, 3²) truncated positive,
    b ~ N(0, 10²), c ~ Beta(4, 12).
    """

    mu_a: float = 1.0
    sigma2_a: float = 9.0
    mu_b: float = 0.0
    sigma2_b: float = 100.0
    alpha_c: float = 4.0
    beta_c: float = 12.0
    c_lower: float = 0.0
    c_upper: float = 1.0
    item_model: str = '3pno'

    @classmethod
    def from_priors(cls, priors: PriorSpec, item_model: str = '3pno') -> "ItemGenerator":
        lower, upper = priors.c_bounds
        return cls(
            mu_a=priors.mu_a, sigma2_a=priors.sigma2_a,
            mu_b=priors.mu_b, sigma2_b=priors.sigma2_b,
            alpha_c=priors.alpha_c, beta_c=priors.beta_c,
            c_lower=lower, c_upper=upper,
            item_model=item_model,
        )

    def draw(self, I: int, rng: RngStream) -> ItemParameters:
        gen = rng.generator
        if self.item_model == '1pno':
            a = np.ones(I)
        else:
            a = sample_truncated_normal(np.full(I, self.mu_a), np.sqrt(self.sigma2_a), Side.ABOVE_ZERO, rng)
        b = self.mu_b + np.sqrt(self.sigma2_b) * gen.standard_normal(I)
        if self.item_model == '3pno':
            c = sample_beta_truncated(
                np.full(I, self.alpha_c), np.full(I, self.beta_c), self.c_lower, self.c_upper, rng,
            )
        else:
            c = np.zeros(I)
        return ItemParameters(a=a, b=b, c=c)


@dataclass(frozen=True)
class SimulationDesign:
    """Everything ``simulate_dataset`` needs.

    ``items`` fixes the true item parameters instead of drawing them.
    ``unidentified_truth`` allows a truth mixture that breaks the fitting
    identification (component 1 not N(0, 1), or p₁ ≤ 0.5).
    """

    J: int
    I: int
    mixture: MixtureParameters
    item_generator: ItemGenerator = field(default_factory=ItemGenerator)
    missing_rate: float = 0.0
    seed: int = 20_240_101
    unidentified_truth: bool = False
    items: Optional[ItemParameters] = None

    def __post_init__(self):
        if self.J < 1 or self.I < 1:
            raise DomainError(f"design needs J, I >= 1, got J={self.J}, I={self.I}")
        if not 0.0 <= self.missing_rate < 1.0:
            raise DomainError(f"missing_rate must lie in [0, 1), got {self.missing_rate}")
        if self.items is not None and self.items.I != self.I:
            raise DomainError(f"{self.items.I} fixed items for I={self.I}")
        if not self.unidentified_truth:
            problems = self.mixture.identification_problems()
            if problems:
                raise DomainError(
                    f"truth mixture is not identified ({'; '.join(problems)}); "
                    f"set unidentified_truth to simulate from it anyway"
                )


@dataclass(frozen=True)
class SimulatedTruth:
    items: ItemParameters
    theta: np.ndarray
    W: np.ndarray
    mixture: MixtureParameters


# ═══════════════════════════════════════════════
# Building blocks
# ═══════════════════════════════════════════════

def draw_abilities(mixture: MixtureParameters, J: int, rng: RngStream) -> tuple[np.ndarray, np.ndarray]:
    """θ_j from the mixture; returns (theta, 0-based component labels)."""
    gen = rng.generator
    W = gen.choice(mixture.K, size=J, p=mixture.p)
    theta = mixture.mu[W] + np.sqrt(mixture.sigma2[W]) * gen.standard_normal(J)
    return theta, W


def missing_mask(J: int, I: int, missing_rate: float, rng: RngStream) -> np.ndarray:
    """Observed-cell mask with each cell missing at ``missing_rate``.

    Every row and column keeps at least one observed cell.
    """
    gen = rng.generator
    observed = gen.random((J, I)) >= missing_rate
    for j in np.flatnonzero(~observed.any(axis=1)):
        observed[j, gen.integers(I)] = True
    for i in np.flatnonzero(~observed.any(axis=0)):
        observed[gen.integers(J), i] = True
    return observed


def simulate_responses(
    items: ItemParameters,
    theta: np.ndarray,
    rng: RngStream,
    observed: Optional[np.ndarray] = None,
) -> ResponseMatrix:
    """Bernoulli draws through the ICC, masked by ``observed``."""
    prob = icc(theta[:, None], items.a[None, :], items.b[None, :], items.c[None, :])
    values = (rng.generator.random(prob.shape) < prob).astype(np.int8)
    if observed is None:
        observed = np.ones(values.shape, dtype=bool)
    return ResponseMatrix(values=values, observed=observed)


def simulate_dataset(design: SimulationDesign) -> tuple[ResponseMatrix, SimulatedTruth]:
    """Draw a full dataset and the truth it was generated from."""
    rng = RngStream(design.seed, SIMULATION_STREAM)
    items = design.items if design.items is not None else design.item_generator.draw(design.I, rng.substream(0))
    theta, W = draw_abilities(design.mixture, design.J, rng.substream(1))
    observed = missing_mask(design.J, design.I, design.missing_rate, rng.substream(3))
    responses = simulate_responses(items, theta, rng.substream(2), observed)
    logger.info(
        f"Simulated {design.J}x{design.I} responses (K={design.mixture.K}, "
        f"{100 * (1 - observed.mean()):.1f}% missing, seed {design.seed})"
    )
    return responses, SimulatedTruth(items=items, theta=theta, W=W, mixture=design.mixture)


# ═══════════════════════════════════════════════
# Prior simulation
# ═══════════════════════════════════════════════

def draw_prior_mixture(priors: PriorSpec, options: ModelOptions, rng: RngStream) -> MixtureParameters:
    """One mixture from the prior under the identification restrictions."""
    K = options.K
    if K == 1:
        return MixtureParameters.standard_normal()
    priors = priors.for_components(K)
    for _ in range(_PRIOR_WEIGHT_ATTEMPTS):
        p = sample_dirichlet(priors.alphas, rng)
        if weights_acceptable(p, options.weight_rule):
            break
    else:
        raise SamplingError(f"prior weights never satisfied {options.weight_rule}", report={'alphas': list(priors.alphas)})
    mu, sigma2 = sample_nig(np.asarray(priors.nig_m[1:]), priors.nig_beta, priors.nig_d, priors.nig_e, rng)
    order = np.argsort(mu, kind='stable')
    return MixtureParameters(
        p=np.concatenate([[p[0]], p[1:][order]]),
        mu=np.concatenate([[0.0], mu[order]]),
        sigma2=np.concatenate([[1.0], sigma2[order]]),
    )


def draw_prior_state(
    priors: PriorSpec,
    options: ModelOptions,
    J: int,
    I: int,
    rng: RngStream,
) -> tuple[ItemParameters, MixtureParameters, np.ndarray, np.ndarray]:
    """(items, mixture, theta, W) drawn jointly from the prior."""
    items = ItemGenerator.from_priors(priors, options.item_model).draw(I, rng.substream(0))
    mixture = draw_prior_mixture(priors, options, rng.substream(1))
    theta, W = draw_abilities(mixture, J, rng.substream(2))
    return items, mixture, theta, W


# ═══════════════════════════════════════════════
# Preset → design
# ═══════════════════════════════════════════════

def design_from_settings(
    settings: Mapping[str, Any],
    *,
    seed: int,
    J: Optional[int] = None,
    I: Optional[int] = None,
    missing_rate: Optional[float] = None,
    item_generator: Optional[ItemGenerator] = None,
) -> SimulationDesign:
    """Build a design from a preset's ``settings`` dict plus overrides."""
    try:
        mixture = MixtureParameters(p=settings['p'], mu=settings['mu'], sigma2=settings['sigma2'])
        return SimulationDesign(
            J=int(J if J is not None else settings['J']),
            I=int(I if I is not None else settings['I']),
            mixture=mixture,
            item_generator=item_generator or ItemGenerator(),
            missing_rate=float(missing_rate if missing_rate is not None else settings.get('missing_rate', 0.0)),
            seed=int(seed),
            unidentified_truth=bool(settings.get('unidentified_truth', False)),
        )
    except KeyError as exc:
        raise DomainError(f"preset settings lack {exc.args[0]!r}") from exc
