"""
start.py — Command-line launcher for MixIRT.

Commands:
  simulate    draw a synthetic dataset from a preset design
  fit         run the Gibbs sampler on a response file and write draws + report
  summarize   rebuild the report from stored draws (optionally RMSD / RMSE)

Every RunConfig field is also a flag (``--burn-in``, ``--sigma2-a`` ...).
Settings resolve as defaults < ``--config`` file < flags.

Exit codes: 0 success, 2 input error, 3 sampler error, 4 post-processing error.

Usage:
    python start.py simulate --preset study1_desk --output-dir data
    python start.py fit --input-path data/responses.csv --output-dir fit --K 2
    python start.py summarize fit --truth-dir data
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from core.errors import DomainError, ExitCode, InputError, MixIrtError
from core.state_registry import LIST_KEYS
from engine.chain import run_chain
from io_helpers import (
    META_FILE,
    RESPONSES_FILE,
    atomic_write_json,
    chain_meta,
    check_disk_space,
    estimated_draw_bytes,
    get_config_dir,
    read_chain,
    read_responses,
    read_truth_theta,
    write_chain,
    write_responses,
    write_truth,
)
from post_processing import ReportOptions, ReportResult, run_report, write_rmsd, write_rmse
from preset_manager import PresetManager
from run_config import RunConfig, build_run_config, parse_value
from simulation import ItemGenerator, design_from_settings, simulate_dataset
from version import __version__

logger = logging.getLogger(__name__)

LOG_FILE = 'run.log'
_LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


# ── Logging ───────────────────────────────────────────────────────

def _configure_logging(level: str, log_dir: Optional[Path] = None) -> list[logging.Handler]:
    """Attach a console handler (and ``run.log`` in ``log_dir``) to the root logger."""
    root = logging.getLogger()
    numeric = logging.getLevelName(level.upper())
    if not isinstance(numeric, int):
        raise InputError(f"unknown log level {level!r}")
    root.setLevel(numeric)
    formatter = logging.Formatter(_LOG_FORMAT)
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_dir is not None:
        handlers.append(logging.FileHandler(log_dir / LOG_FILE, encoding='utf-8'))
    for handler in handlers:
        handler.setFormatter(formatter)
        handler.setLevel(numeric)
        root.addHandler(handler)
    return handlers


def _release_logging(handlers: list[logging.Handler]) -> None:
    root = logging.getLogger()
    for handler in handlers:
        root.removeHandler(handler)
        handler.close()


# ── Commands ──────────────────────────────────────────────────────

def _run_meta(command: str, config: RunConfig) -> dict:
    return {'version': __version__, 'command': command, 'seed': config.seed, 'run_config': config.to_dict()}


def cmd_simulate(config: RunConfig, save_preset: Optional[str] = None) -> list[Path]:
    """Simulate a dataset from ``config.preset`` and write it with its truth."""
    manager = PresetManager(get_config_dir())
    preset = manager.get(config.preset)
    generator = ItemGenerator.from_priors(config.prior_spec(), config.item_model)
    try:
        design = design_from_settings(
            preset['settings'], seed=config.seed, J=config.J, I=config.I,
            missing_rate=config.missing_rate, item_generator=generator,
        )
    except DomainError as exc:
        raise InputError(f"invalid simulation design: {exc}") from exc
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    responses, truth = simulate_dataset(design)

    paths = [write_responses(out_dir / RESPONSES_FILE, responses)]
    paths += write_truth(out_dir, truth.items, truth.theta, truth.W, truth.mixture, responses.item_names)
    meta = _run_meta('simulate', config) | {
        'preset': preset['preset_id'], 'J': design.J, 'I': design.I, 'missing_rate': design.missing_rate,
    }
    paths.append(atomic_write_json(out_dir / META_FILE, meta))

    if save_preset:
        settings = dict(preset['settings'], J=design.J, I=design.I, missing_rate=design.missing_rate)
        try:
            manager.save_preset(save_preset, f"Saved from {preset['preset_id']}", settings)
        except DomainError as exc:
            raise InputError(f"preset {save_preset!r}: {exc}") from exc
    return paths


def cmd_fit(config: RunConfig):
    """Fit the model to ``config.input_path`` and write draws, meta and report."""
    if not config.input_path:
        raise InputError("fit needs --input-path (or input_path in the config file)")
    responses = read_responses(config.input_path)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sampler = config.sampler_config()
    options = config.model_options()
    needed = estimated_draw_bytes(sampler.n_retained, responses.J, responses.I, options.K)
    enough, available_mb = check_disk_space(out_dir, needed)
    if not enough:
        logger.warning(f"Draw files need about {needed / 2**20:.0f} MB; only {available_mb:.0f} MB free in {out_dir}")

    chain = run_chain(
        responses, config.prior_spec(), options.K, sampler,
        item_model=options.item_model, weight_rule=options.weight_rule,
    )
    write_chain(out_dir, chain, config.rescale_spec())
    atomic_write_json(out_dir / META_FILE, _run_meta('fit', config) | chain_meta(chain))
    run_report(chain, out_dir)
    return chain


def cmd_summarize(
    run_dir: Path,
    *,
    output_dir: Optional[Path] = None,
    compare: Optional[Path] = None,
    truth_dir: Optional[Path] = None,
    trace_every: int = 10,
) -> ReportResult:
    """Recompute the report of a finished fit from its draw files."""
    chain = read_chain(run_dir)
    out_dir = Path(output_dir or run_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_report(chain, out_dir, ReportOptions(trace_every=trace_every))
    if compare is not None:
        result.paths.append(write_rmsd(chain, read_chain(compare), out_dir))
    if truth_dir is not None:
        result.paths.append(write_rmse(chain, read_truth_theta(truth_dir), out_dir))
    return result


# ── Argument parsing ──────────────────────────────────────────────

def _config_flags() -> argparse.ArgumentParser:
    """Parent parser with one flag per RunConfig field (all default None)."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument('--config', type=Path, help='key = value settings file')
    group = parent.add_argument_group('settings')
    for f in fields(RunConfig):
        help_text = 'comma-separated list' if f.name in LIST_KEYS else None
        group.add_argument(
            f"--{f.name.replace('_', '-')}", dest=f.name, default=None, metavar=f.name.upper(),
            type=lambda raw, key=f.name: parse_value(key, raw), help=help_text,
        )
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='mixirt', description='Bayesian 3PNO IRT with normal-mixture abilities.')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest='command', required=True)
    settings = _config_flags()

    simulate = sub.add_parser('simulate', parents=[settings], help='simulate a dataset from a preset')
    simulate.add_argument('--list-presets', action='store_true', help='list presets and exit')
    simulate.add_argument('--save-preset', metavar='NAME', help='save the effective design as a user preset')

    sub.add_parser('fit', parents=[settings], help='fit the model to a response file')

    summarize = sub.add_parser('summarize', help='rebuild reports from stored draws')
    summarize.add_argument('run_dir', type=Path)
    summarize.add_argument('--output-dir', type=Path, default=None)
    summarize.add_argument('--compare', type=Path, default=None, help='second fit; writes rmsd.csv')
    summarize.add_argument('--truth-dir', type=Path, default=None, help='simulation output; writes rmse.csv')
    summarize.add_argument('--trace-every', type=int, default=10)
    summarize.add_argument('--log-level', default='INFO')
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}


def _list_presets() -> None:
    for preset in PresetManager(get_config_dir()).all_presets():
        print(f"{preset['preset_id']:<24} {preset.get('description', '')}")


# ── Entry Point ───────────────────────────────────────────────────

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return ExitCode.OK if exc.code == 0 else ExitCode.INPUT

    handlers: list[logging.Handler] = []
    try:
        if args.command == 'summarize':
            handlers = _configure_logging(args.log_level)
            result = cmd_summarize(
                args.run_dir, output_dir=args.output_dir, compare=args.compare,
                truth_dir=args.truth_dir, trace_every=args.trace_every,
            )
            print(f"Wrote {len(result.paths)} file(s)")
            return ExitCode.OK

        if args.command == 'simulate' and args.list_presets:
            _list_presets()
            return ExitCode.OK

        config = build_run_config(args.config, _overrides(args))
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers = _configure_logging(config.log_level, out_dir)
        logger.info(f"MixIRT {__version__}: {args.command} -> {out_dir}")

        if args.command == 'simulate':
            paths = cmd_simulate(config, save_preset=args.save_preset)
            print(f"Wrote {len(paths)} file(s) to {out_dir}")
        else:
            chain = cmd_fit(config)
            print(f"Retained {chain.n_retained} draws; outputs in {out_dir}")
        return ExitCode.OK

    except MixIrtError as exc:
        logger.error(f"{type(exc).__name__}: {exc}")
        logger.debug("Traceback:", exc_info=True)
        if not handlers:
            print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        logger.error(f"Cannot write output: {exc}")
        if not handlers:
            print(f"error: {exc}", file=sys.stderr)
        return ExitCode.INPUT
    finally:
        _release_logging(handlers)


if __name__ == "__main__":
    sys.exit(int(main()))
