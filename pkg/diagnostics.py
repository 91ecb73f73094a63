"""
Diagnostics — Posterior summaries, accuracy metrics and density export.

Pure functions over ``ChainOutput`` (or plain arrays); nothing here touches
the filesystem.  Failures raise ``PostprocessingError``.

Usage:
    from diagnostics import summarize, rmse, density_export
    summary = summarize(chain)
    summary.table.to_csv(...)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import arviz as az
import numpy as np
import pandas as pd
from scipy import signal, stats

from core.errors import PostprocessingError
from model.evaluation import mixture_mean, mixture_sd
from model.state import MixtureParameters, RescaleSpec

logger = logging.getLogger(__name__)

MIN_SUMMARY_DRAWS = 10
# arviz needs at least four draws per chain.
MIN_ESS_DRAWS = 4
MIN_DENSITY_VALUES = 100
DEFAULT_GRID_POINTS = 1024
# Grid padding beyond the sample range, in kernel bandwidths.
GRID_PAD_BANDWIDTHS = 5.0
MODE_PROMINENCE = 0.01

SUMMARY_COLUMNS = ['parameter', 'mean', 'sd', 'q2.5', 'q97.5', 'ess']


# ═══════════════════════════════════════════════
# Effective sample size
# ═══════════════════════════════════════════════

def effective_sample_size(draws) -> float:
    """ESS of the mean for a single chain (arviz, ``method="mean"``).

    Constant or very short chains report the draw count.  Never exceeds the
    number of draws.
    """
    x = np.asarray(draws, dtype=float).reshape(-1)
    n = x.size
    if n < MIN_ESS_DRAWS or not np.ptp(x) > 0:
        return float(n)
    ess = float(az.ess(x[np.newaxis, :], method='mean'))
    if not np.isfinite(ess):
        logger.debug(f"arviz returned ESS={ess} for {n} draws; reporting the draw count")
        return float(n)
    return min(float(n), ess)


# ═══════════════════════════════════════════════
# Posterior summary
# ═══════════════════════════════════════════════

@dataclass
class PosteriorSummary:
    """Per-parameter mean, sd, 95% interval and ESS, plus chain counters."""

    table: pd.DataFrame
    n_draws: int
    acceptance_rates: dict[str, float] = field(default_factory=dict)

    def row(self, parameter: str) -> pd.Series:
        match = self.table[self.table['parameter'] == parameter]
        if match.empty:
            raise KeyError(parameter)
        return match.iloc[0]


def summarize_draws(draws: Mapping[str, np.ndarray]) -> pd.DataFrame:
    """Summary table for named 1-D draw vectors."""
    rows = []
    for name, values in draws.items():
        x = np.asarray(values, dtype=float)
        if x.size < MIN_SUMMARY_DRAWS:
            raise PostprocessingError(f"{name}: {x.size} draws, need at least {MIN_SUMMARY_DRAWS}")
        lo, hi = np.quantile(x, [0.025, 0.975], method='linear')
        rows.append((name, x.mean(), x.std(ddof=1), lo, hi, effective_sample_size(x)))
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def chain_parameters(chain, include_theta: bool = True) -> dict[str, np.ndarray]:
    """Every scalar parameter of a chain as named draw vectors."""
    params: dict[str, np.ndarray] = {}
    for prefix, block in (('a', chain.a), ('b', chain.b), ('c', chain.c)):
        params.update({f"{prefix}_{i + 1}": block[:, i] for i in range(chain.I)})
    for prefix, block in (('p', chain.p), ('mu', chain.mu), ('sigma2', chain.sigma2)):
        params.update({f"{prefix}_{k + 1}": block[:, k] for k in range(chain.K)})
    params['mixture_mean'] = chain.mixture_mean_draws()
    params['mixture_sd'] = chain.mixture_sd_draws()
    params['mixture_variance'] = params['mixture_sd'] ** 2
    if include_theta:
        params.update({f"theta_{j + 1}": chain.theta[:, j] for j in range(chain.J)})
    return params


def summarize(chain, include_theta: bool = True) -> PosteriorSummary:
    """Posterior summary of every parameter of ``chain``.

    Quantiles use linear interpolation between order statistics.
    """
    if chain.n_retained < MIN_SUMMARY_DRAWS:
        raise PostprocessingError(f"chain has {chain.n_retained} retained draws, need at least {MIN_SUMMARY_DRAWS}")
    table = summarize_draws(chain_parameters(chain, include_theta))
    return PosteriorSummary(table=table, n_draws=chain.n_retained, acceptance_rates=chain.acceptance_rates())


# ═══════════════════════════════════════════════
# Accuracy
# ═══════════════════════════════════════════════

def _root_mean_square(x, y, what: str) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.size != y.size:
        raise PostprocessingError(f"{what} needs equal lengths, got {x.size} and {y.size}")
    if x.size == 0:
        raise PostprocessingError(f"{what} of empty vectors")
    return float(np.sqrt(np.mean((x - y) ** 2)))


def rmse(theta_hat, theta_true) -> float:
    """Root mean squared error of estimates against the truth."""
    return _root_mean_square(theta_hat, theta_true, 'rmse')


def rmsd(theta_a, theta_b) -> float:
    """Root mean squared difference between two fits."""
    return _root_mean_square(theta_a, theta_b, 'rmsd')


def align_to_mixture_scale(normal_chain, mixture_chain) -> np.ndarray:
    """θ draws of a K = 1 fit mapped to the mixture fit's estimated mean and sd."""
    if normal_chain.K != 1:
        raise PostprocessingError(f"expected a K=1 chain to align, got K={normal_chain.K}")
    target = RescaleSpec(
        m=float(mixture_chain.mixture_mean_draws().mean()),
        s=float(mixture_chain.mixture_sd_draws().mean()),
    )
    return normal_chain.rescaled_theta(target)


def rmse_report(chain, truth_theta, rescale: Optional[RescaleSpec] = None) -> dict[str, float]:
    """RMSE of the θ posterior means against a simulation truth."""
    draws = chain.theta if rescale is None else chain.rescaled_theta(rescale)
    return {'J': int(chain.J), 'rmse': rmse(draws.mean(axis=0), truth_theta)}


def rmsd_report(chain_a, chain_b) -> dict[str, float]:
    """RMSD between the θ posterior means of two fits."""
    return {'J': int(chain_a.J), 'rmsd': rmsd(chain_a.theta_posterior_mean(), chain_b.theta_posterior_mean())}


# ═══════════════════════════════════════════════
# Densities
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class GridSpec:
    lower: float
    upper: float
    points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if not self.upper > self.lower or self.points < 2:
            raise PostprocessingError(f"invalid grid ({self.lower}, {self.upper}, {self.points})")

    def values(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.points)


@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'grid': self.grid, 'density': self.density})


def density_export(values, grid: Optional[GridSpec] = None) -> DensityEstimate:
    """Gaussian-kernel density (Silverman bandwidth) on a grid.

    The default grid spans the sample range padded by five bandwidths.
    """
    x = np.asarray(values, dtype=float).reshape(-1)
    if x.size < MIN_DENSITY_VALUES:
        raise PostprocessingError(f"density needs at least {MIN_DENSITY_VALUES} values, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise PostprocessingError("density input contains non-finite values")
    if not np.ptp(x) > 0:
        raise PostprocessingError("density input has zero variance")
    kde = stats.gaussian_kde(x, bw_method='silverman')
    if grid is None:
        bandwidth = float(np.sqrt(kde.covariance[0, 0]))
        pad = GRID_PAD_BANDWIDTHS * bandwidth
        grid = GridSpec(x.min() - pad, x.max() + pad)
    points = grid.values()
    return DensityEstimate(grid=points, density=kde(points))


def count_modes(grid, density, prominence: float = MODE_PROMINENCE) -> np.ndarray:
    """Grid locations of local maxima with at least ``prominence`` × max height."""
    density = np.asarray(density, dtype=float)
    padded = np.concatenate([[0.0], density, [0.0]])
    peaks, _ = signal.find_peaks(padded, prominence=prominence * density.max())
    return np.asarray(grid, dtype=float)[peaks - 1]


def mixture_density(grid, params: MixtureParameters) -> np.ndarray:
    """Σ p_k N(x; μ_k, σ²_k) evaluated on ``grid``."""
    x = np.asarray(grid, dtype=float)[..., None]
    return np.sum(params.p * stats.norm.pdf(x, loc=params.mu, scale=np.sqrt(params.sigma2)), axis=-1)


def density_l1_distance(params: MixtureParameters, points: int = 8001) -> float:
    """L₁ distance between a mixture and the normal with its mean and variance."""
    sd = np.sqrt(params.sigma2)
    grid = np.linspace(np.min(params.mu - 10 * sd), np.max(params.mu + 10 * sd), points)
    matched = stats.norm.pdf(grid, loc=mixture_mean(params), scale=mixture_sd(params))
    return float(np.trapezoid(np.abs(mixture_density(grid, params) - matched), grid))


# ═══════════════════════════════════════════════
# Mixture evidence
# ═══════════════════════════════════════════════

@dataclass(frozen=True)
class P1Evidence:
    """Posterior of the first weight; small p₁ favours the mixture."""

    mean: float
    q2_5: float
    q97_5: float
    threshold: float
    prob_below: float

    def as_dict(self) -> dict[str, float]:
        return {
            'p1_mean': self.mean, 'p1_q2.5': self.q2_5, 'p1_q97.5': self.q97_5,
            'threshold': self.threshold, 'prob_p1_below_threshold': self.prob_below,
        }


def p1_evidence_from_draws(p1_draws, threshold: float = 0.9) -> P1Evidence:
    p1 = np.asarray(p1_draws, dtype=float).reshape(-1)
    if p1.size == 0:
        raise PostprocessingError("no p1 draws")
    lo, hi = np.quantile(p1, [0.025, 0.975], method='linear')
    return P1Evidence(
        mean=float(p1.mean()), q2_5=float(lo), q97_5=float(hi),
        threshold=threshold, prob_below=float(np.mean(p1 < threshold)),
    )


def p1_evidence(chain, threshold: float = 0.9) -> P1Evidence:
    """Posterior mean, 95% interval and P(p₁ < threshold) of the first weight."""
    if chain.K < 2:
        raise PostprocessingError("p1 evidence needs a chain with K >= 2")
    return p1_evidence_from_draws(chain.p[:, 0], threshold)
