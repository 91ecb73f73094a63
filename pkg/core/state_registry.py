"""
State Registry — Centralized config key names and defaults for MixIRT.

All ``RunConfig`` key names, their defaults, and the helper that fills a
partial mapping live here.  This is the single source of truth for
defaults, so the CLI, the config-file loader and the presets never carry
their own copies.

The prior defaults reproduce the simulation-study priors.

Usage:
    from core.state_registry import ensure_defaults, ALL_DEFAULTS
    settings = ensure_defaults({'K': 3})
"""

from __future__ import annotations

import copy
import os
from typing import Any, Mapping

# ═══════════════════════════════════════════════
# Key Name Constants
# ═══════════════════════════════════════════════

PRIOR_KEYS = [
    'mu_a', 'sigma2_a', 'mu_b', 'sigma2_b',
    'alpha_c', 'beta_c', 'c_lower', 'c_upper',
    'alphas', 'nig_m', 'nig_beta', 'nig_d', 'nig_e',
]

SAMPLER_KEYS = [
    'K', 'iterations', 'burn_in', 'thin', 'seed', 'workers', 'chunk_size',
    'rejection_max_attempts', 'progress_every', 'item_model', 'weight_rule',
]

SIMULATION_KEYS = ['preset', 'J', 'I', 'missing_rate']

OUTPUT_KEYS = ['input_path', 'output_dir', 'rescale_mean', 'rescale_sd', 'log_level']

LIST_KEYS = {'alphas', 'nig_m'}

WORKERS_ENV_VAR = 'MIXIRT_WORKERS'

ITEM_MODELS = ('3pno', '2pno', '1pno')
WEIGHT_RULES = ('p1_gt_half', 'p1_largest')


# ═══════════════════════════════════════════════
# Default Value Dictionaries
# ═══════════════════════════════════════════════

PRIOR_DEFAULTS = {
    'mu_a': 1.0,
    'sigma2_a': 9.0,
    'mu_b': 0.0,
    'sigma2_b': 100.0,
    'alpha_c': 4.0,
    'beta_c': 12.0,
    'c_lower': None,
    'c_upper': None,
    # None = (2, 1, 1, ...) for the chosen K
    'alphas': None,
    # None = 0 for every free component
    'nig_m': None,
    # μ | σ² ~ N(m, σ²/β); β = 0.01 puts a variance scale of 100 on μ
    'nig_beta': 0.01,
    'nig_d': 0.001,
    'nig_e': 0.001,
}

SAMPLER_DEFAULTS = {
    'K': 2,
    'iterations': 20_000,
    'burn_in': 10_000,
    'thin': 1,
    'seed': 20_240_101,
    'workers': None,            # resolved by default_worker_count()
    'chunk_size': 256,
    'rejection_max_attempts': 1_000_000,
    'progress_every': 500,
    'item_model': '3pno',
    'weight_rule': 'p1_gt_half',
}

SIMULATION_DEFAULTS = {
    'preset': 'study1',
    'J': None,                  # None = take from the preset
    'I': None,
    'missing_rate': None,
}

OUTPUT_DEFAULTS = {
    'input_path': None,
    'output_dir': 'mixirt_output',
    'rescale_mean': None,
    'rescale_sd': None,
    'log_level': 'INFO',
}

ALL_DEFAULTS = {
    **PRIOR_DEFAULTS,
    **SAMPLER_DEFAULTS,
    **SIMULATION_DEFAULTS,
    **OUTPUT_DEFAULTS,
}


# ═══════════════════════════════════════════════
# Initialization Functions
# ═══════════════════════════════════════════════

def default_worker_count() -> int:
    """Worker count from ``MIXIRT_WORKERS``, else physical cores, else 1."""
    raw = os.environ.get(WORKERS_ENV_VAR, '').strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    try:
        import psutil
        cores = psutil.cpu_count(logical=False)
    except ImportError:
        cores = None
    return max(1, cores or 1)


def ensure_defaults(settings: Mapping[str, Any] | None = None) -> dict[str, Any]:
    """Return a full settings dict: defaults overlaid with ``settings``.

    Keys whose value is ``None`` in ``settings`` do not override defaults.
    """
    merged = copy.deepcopy(ALL_DEFAULTS)
    for key, value in (settings or {}).items():
        if value is not None:
            merged[key] = value
    if merged['workers'] is None:
        merged['workers'] = default_worker_count()
    return merged


def default_alphas(K: int) -> tuple[float, ...]:
    """Dirichlet default: 2 on the pinned component, 1 elsewhere."""
    return (2.0,) + (1.0,) * (K - 1)
