"""
Run Config — The flat settings record behind every CLI command.

Settings are layered: registry defaults < ``--config`` key=value file <
command-line flags.  The file format is one ``key = value`` per line with
``#`` comments; list keys take comma-separated values and an empty value
leaves a key unset.

Usage:
    from run_config import build_run_config
    config = build_run_config('fit.cfg', {'K': 3})
    chain = run_chain(responses, config.prior_spec(), config.K, config.sampler_config())
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from core.errors import DomainError, InputError
from core.state_registry import ALL_DEFAULTS, LIST_KEYS, ensure_defaults
from engine.chain import SamplerConfig
from model.state import ModelOptions, PriorSpec, RescaleSpec

logger = logging.getLogger(__name__)

INT_KEYS = {
    'K', 'iterations', 'burn_in', 'thin', 'seed', 'workers', 'chunk_size',
    'rejection_max_attempts', 'progress_every', 'J', 'I',
}
FLOAT_KEYS = {
    'mu_a', 'sigma2_a', 'mu_b', 'sigma2_b', 'alpha_c', 'beta_c', 'c_lower', 'c_upper',
    'nig_beta', 'nig_d', 'nig_e', 'rescale_mean', 'rescale_sd', 'missing_rate',
}


@dataclass
class RunConfig:
    # paths / output
    input_path: Optional[str] = None
    output_dir: str = ALL_DEFAULTS['output_dir']
    log_level: str = ALL_DEFAULTS['log_level']
    rescale_mean: Optional[float] = None
    rescale_sd: Optional[float] = None
    # simulation
    preset: str = ALL_DEFAULTS['preset']
    J: Optional[int] = None
    I: Optional[int] = None
    missing_rate: Optional[float] = None
    # sampler
    K: int = ALL_DEFAULTS['K']
    iterations: int = ALL_DEFAULTS['iterations']
    burn_in: int = ALL_DEFAULTS['burn_in']
    thin: int = ALL_DEFAULTS['thin']
    seed: int = ALL_DEFAULTS['seed']
    workers: int = 1
    chunk_size: int = ALL_DEFAULTS['chunk_size']
    rejection_max_attempts: int = ALL_DEFAULTS['rejection_max_attempts']
    progress_every: int = ALL_DEFAULTS['progress_every']
    item_model: str = ALL_DEFAULTS['item_model']
    weight_rule: str = ALL_DEFAULTS['weight_rule']
    # priors
    mu_a: float = ALL_DEFAULTS['mu_a']
    sigma2_a: float = ALL_DEFAULTS['sigma2_a']
    mu_b: float = ALL_DEFAULTS['mu_b']
    sigma2_b: float = ALL_DEFAULTS['sigma2_b']
    alpha_c: float = ALL_DEFAULTS['alpha_c']
    beta_c: float = ALL_DEFAULTS['beta_c']
    c_lower: Optional[float] = None
    c_upper: Optional[float] = None
    alphas: Optional[tuple[float, ...]] = None
    nig_m: Optional[tuple[float, ...]] = None
    nig_beta: float = ALL_DEFAULTS['nig_beta']
    nig_d: float = ALL_DEFAULTS['nig_d']
    nig_e: float = ALL_DEFAULTS['nig_e']

    @classmethod
    def from_mapping(cls, settings: Mapping[str, Any]) -> "RunConfig":
        unknown = set(settings) - {f.name for f in fields(cls)}
        if unknown:
            raise InputError(f"unknown setting(s): {', '.join(sorted(unknown))}")
        merged = ensure_defaults(settings)
        for key in LIST_KEYS:
            if merged[key] is not None:
                merged[key] = tuple(float(v) for v in merged[key])
        return cls(**merged)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for key in LIST_KEYS:
            if data[key] is not None:
                data[key] = list(data[key])
        return data

    # ── Domain objects ──────────────────────────────────────────────

    def prior_spec(self) -> PriorSpec:
        try:
            return PriorSpec(
                mu_a=self.mu_a, sigma2_a=self.sigma2_a,
                mu_b=self.mu_b, sigma2_b=self.sigma2_b,
                alpha_c=self.alpha_c, beta_c=self.beta_c,
                c_lower=self.c_lower, c_upper=self.c_upper,
                alphas=self.alphas or (), nig_m=self.nig_m or (),
                nig_beta=self.nig_beta, nig_d=self.nig_d, nig_e=self.nig_e,
            ).for_components(self.K)
        except DomainError as exc:
            raise InputError(f"invalid prior settings: {exc}") from exc

    def sampler_config(self) -> SamplerConfig:
        try:
            return SamplerConfig(
                iterations=self.iterations, burn_in=self.burn_in, thin=self.thin, seed=self.seed,
                parallel_workers=self.workers,
                rejection_max_attempts=self.rejection_max_attempts,
                chunk_size=self.chunk_size,
                progress_every=self.progress_every,
            )
        except DomainError as exc:
            raise InputError(f"invalid sampler settings: {exc}") from exc

    def model_options(self) -> ModelOptions:
        try:
            return ModelOptions(K=self.K, item_model=self.item_model, weight_rule=self.weight_rule)
        except DomainError as exc:
            raise InputError(f"invalid model settings: {exc}") from exc

    def rescale_spec(self) -> Optional[RescaleSpec]:
        """Target scale for rescaled θ draws; ``None`` when not requested."""
        if self.rescale_mean is None and self.rescale_sd is None:
            return None
        if self.rescale_mean is None or self.rescale_sd is None:
            raise InputError("rescaling needs both rescale_mean and rescale_sd")
        try:
            return RescaleSpec(m=self.rescale_mean, s=self.rescale_sd)
        except DomainError as exc:
            raise InputError(str(exc)) from exc

    def validate(self) -> None:
        """Check every constraint a command relies on."""
        self.prior_spec()
        self.sampler_config()
        self.model_options()
        self.rescale_spec()
        if self.missing_rate is not None and not 0.0 <= self.missing_rate < 1.0:
            raise InputError(f"missing_rate must lie in [0, 1), got {self.missing_rate}")


# ═══════════════════════════════════════════════
# Parsing
# ═══════════════════════════════════════════════

def _parser_for(key: str) -> Callable[[str], Any]:
    if key in LIST_KEYS:
        return lambda raw: tuple(float(part) for part in raw.split(',') if part.strip())
    if key in INT_KEYS:
        return lambda raw: int(raw.replace('_', ''))
    if key in FLOAT_KEYS:
        return float
    return str


def parse_value(key: str, raw: str) -> Any:
    """Convert the text of one setting; empty text means unset."""
    raw = raw.strip()
    if raw == '':
        return None
    return _parser_for(key)(raw)


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a key=value config file into a settings dict."""
    path = Path(path)
    known = {f.name for f in fields(RunConfig)}
    try:
        lines = path.read_text(encoding='utf-8').splitlines()
    except OSError as exc:
        raise InputError(f"cannot read config file: {exc.strerror}", path=str(path)) from exc

    settings: dict[str, Any] = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split('#', 1)[0].strip()
        if not text:
            continue
        if '=' not in text:
            raise InputError(f"expected key = value, got {text!r}", path=str(path), row=lineno)
        key, raw = (part.strip() for part in text.split('=', 1))
        if key not in known:
            raise InputError(f"unknown key {key!r}", path=str(path), row=lineno)
        try:
            settings[key] = parse_value(key, raw)
        except ValueError as exc:
            raise InputError(f"bad value for {key}: {raw!r}", path=str(path), row=lineno) from exc
    logger.debug(f"Loaded {len(settings)} setting(s) from {path}")
    return settings


def build_run_config(config_path: Optional[str | Path], overrides: Mapping[str, Any]) -> RunConfig:
    """Defaults, then the config file, then non-None ``overrides``."""
    settings = load_config_file(config_path) if config_path else {}
    settings.update({k: v for k, v in overrides.items() if v is not None})
    config = RunConfig.from_mapping(settings)
    config.validate()
    return config
