"""
Post-Processing Pipeline for MixIRT
Report generation shared between the ``fit`` and ``summarize`` commands.

Provides:
  - ReportOptions: knobs of the report (trace thinning, density grid, p₁ threshold)
  - Individual write_* functions: one per output file
  - run_report: convenience entry point that writes every report file for a chain
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from core.errors import PostprocessingError
from diagnostics import (
    MIN_DENSITY_VALUES,
    GridSpec,
    P1Evidence,
    PosteriorSummary,
    count_modes,
    density_export,
    p1_evidence,
    rmse_report,
    rmsd_report,
    summarize,
)
from io_helpers import atomic_write_csv, atomic_write_json

logger = logging.getLogger(__name__)

SUMMARY_FILE = 'summary.csv'
DENSITY_FILE = 'density.csv'
TRACE_FILE = 'trace.csv'
EVIDENCE_FILE = 'p1_evidence.json'
RMSD_FILE = 'rmsd.csv'
RMSE_FILE = 'rmse.csv'


@dataclass
class ReportOptions:
    trace_every: int = 10
    grid: Optional[GridSpec] = None
    p1_threshold: float = 0.9


@dataclass
class ReportResult:
    summary: PosteriorSummary
    paths: list[Path] = field(default_factory=list)
    evidence: Optional[P1Evidence] = None
    modes: Optional[np.ndarray] = None


# ─────────────────────────────────────────────────────
# Individual writers
# ─────────────────────────────────────────────────────

def trace_frame(chain, every: int = 10) -> pd.DataFrame:
    """Every ``every``-th retained draw of the non-θ parameters."""
    if every < 1:
        raise PostprocessingError(f"trace thinning must be at least 1, got {every}")
    rows = slice(None, None, every)
    columns = {'iteration': chain.iterations[rows]}
    for prefix, block in (('a', chain.a), ('b', chain.b), ('c', chain.c)):
        columns.update({f"{prefix}_{i + 1}": block[rows, i] for i in range(chain.I)})
    for prefix, block in (('p', chain.p), ('mu', chain.mu), ('sigma2', chain.sigma2)):
        columns.update({f"{prefix}_{k + 1}": block[rows, k] for k in range(chain.K)})
    columns['mixture_mean'] = chain.mixture_mean_draws()[rows]
    columns['mixture_sd'] = chain.mixture_sd_draws()[rows]
    return pd.DataFrame(columns)


def write_summary(chain, out_dir: Path) -> tuple[PosteriorSummary, Path]:
    summary = summarize(chain)
    return summary, atomic_write_csv(out_dir / SUMMARY_FILE, summary.table)


def write_density(chain, out_dir: Path, grid: Optional[GridSpec] = None) -> tuple[Optional[np.ndarray], Optional[Path]]:
    """Density of the posterior-mean abilities; skipped below the minimum J."""
    theta_hat = chain.theta_posterior_mean()
    if theta_hat.size < MIN_DENSITY_VALUES:
        logger.warning(f"Skipping {DENSITY_FILE}: {theta_hat.size} individuals, need at least {MIN_DENSITY_VALUES}")
        return None, None
    estimate = density_export(theta_hat, grid)
    modes = count_modes(estimate.grid, estimate.density)
    logger.info(f"Ability density has {modes.size} mode(s) at {np.round(modes, 2).tolist()} (mass {estimate.mass:.5f})")
    return modes, atomic_write_csv(out_dir / DENSITY_FILE, estimate.to_frame())


def write_evidence(chain, out_dir: Path, threshold: float = 0.9) -> tuple[Optional[P1Evidence], Optional[Path]]:
    if chain.K < 2:
        return None, None
    evidence = p1_evidence(chain, threshold)
    logger.info(
        f"p1 posterior mean {evidence.mean:.3f} ({evidence.q2_5:.3f}, {evidence.q97_5:.3f}); "
        f"P(p1 < {threshold}) = {evidence.prob_below:.3f}"
    )
    return evidence, atomic_write_json(out_dir / EVIDENCE_FILE, evidence.as_dict())


def write_rmsd(chain_a, chain_b, out_dir: Path) -> Path:
    if chain_a.J != chain_b.J:
        raise PostprocessingError(f"cannot compare fits of {chain_a.J} and {chain_b.J} individuals")
    report = rmsd_report(chain_a, chain_b)
    logger.info(f"RMSD between theta posterior means: {report['rmsd']:.4f}")
    return atomic_write_csv(out_dir / RMSD_FILE, pd.DataFrame([report]))


def write_rmse(chain, truth_theta, out_dir: Path) -> Path:
    report = rmse_report(chain, truth_theta)
    logger.info(f"RMSE of theta posterior means against truth: {report['rmse']:.4f}")
    return atomic_write_csv(out_dir / RMSE_FILE, pd.DataFrame([report]))


# ─────────────────────────────────────────────────────
# Entry point
# ─────────────────────────────────────────────────────

def run_report(chain, out_dir: str | Path, options: Optional[ReportOptions] = None) -> ReportResult:
    """Write summary, density, trace and p₁ evidence for ``chain``."""
    options = options or ReportOptions()
    out_dir = Path(out_dir)
    summary, summary_path = write_summary(chain, out_dir)
    result = ReportResult(summary=summary, paths=[summary_path])

    result.modes, density_path = write_density(chain, out_dir, options.grid)
    result.evidence, evidence_path = write_evidence(chain, out_dir, options.p1_threshold)
    trace_path = atomic_write_csv(out_dir / TRACE_FILE, trace_frame(chain, options.trace_every))
    result.paths += [p for p in (density_path, evidence_path, trace_path) if p is not None]
    logger.info(f"Wrote {len(result.paths)} report file(s) to {out_dir}")
    return result
