"""
IO Helpers — File formats, atomic writes and config paths for MixIRT.

Every file the tool writes goes through ``_atomic_write`` (write to
``<name>.tmp``, flush, fsync, ``os.replace``), so an interrupted run never
leaves a half-written CSV behind.  Tables are read and written with
pandas; floats are written at round-trip precision so re-reading a draw
file reproduces the in-memory chain exactly.

Usage:
    from io_helpers import read_responses, write_chain, read_chain
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import threading
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from core.errors import InputError, PostprocessingError
from model.state import ItemParameters, MixtureParameters, ModelOptions, PriorSpec, RescaleSpec, ResponseMatrix

logger = logging.getLogger(__name__)

_write_lock = threading.Lock()

CONFIG_DIR_ENV_VAR = 'MIXIRT_CONFIG_DIR'
NA_TOKEN = 'NA'

RESPONSES_FILE = 'responses.csv'
TRUTH_ITEMS_FILE = 'truth_items.csv'
TRUTH_THETA_FILE = 'truth_theta.csv'
TRUTH_MIXTURE_FILE = 'truth_mixture.csv'
DRAWS_ITEMS_FILE = 'draws_items.csv'
DRAWS_MIXTURE_FILE = 'draws_mixture.csv'
DRAWS_THETA_FILE = 'draws_theta.csv'
DRAWS_THETA_RESCALED_FILE = 'draws_theta_rescaled.csv'
META_FILE = 'meta.json'


# --- Config Paths ---

def get_config_dir() -> str:
    """Directory holding saved presets.

    ``MIXIRT_CONFIG_DIR`` when set, else the directory of this source file.
    """
    override = os.environ.get(CONFIG_DIR_ENV_VAR, '').strip()
    if override:
        Path(override).mkdir(parents=True, exist_ok=True)
        return override
    return str(Path(__file__).parent)


# --- Atomic Writes ---

def _atomic_write(path: str | Path, writer) -> Path:
    """Run ``writer(file_obj)`` against ``<path>.tmp`` and move it into place.

    Raises ``OSError`` (after removing the temp file) when the write fails.
    """
    path = Path(path)
    tmp_path = path.with_name(path.name + '.tmp')
    with _write_lock:
        try:
            with open(tmp_path, 'w', encoding='utf-8', newline='') as f:
                writer(f)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp_path, path)
        except OSError:
            try:
                if tmp_path.exists():
                    tmp_path.unlink()
            except OSError:
                pass
            raise
    return path


def atomic_write_json(path: str | Path, data: Any) -> Path:
    return _atomic_write(path, lambda f: json.dump(data, f, indent=2, ensure_ascii=False))


def atomic_write_csv(path: str | Path, frame: pd.DataFrame) -> Path:
    return _atomic_write(path, lambda f: frame.to_csv(f, index=False, na_rep=NA_TOKEN))


# --- Disk Space ---

def check_disk_space(path: str | Path, required_bytes: int = 0) -> tuple[bool, float]:
    """Whether the volume holding ``path`` has ``required_bytes`` + 20% free.

    Returns ``(has_enough, available_mb)``; unknown volumes count as OK.
    """
    try:
        check_path = Path(path).resolve()
        while not check_path.exists() and check_path.parent != check_path:
            check_path = check_path.parent
        stat = shutil.disk_usage(str(check_path))
    except OSError:
        return True, -1.0
    return stat.free >= int(required_bytes * 1.2), stat.free / (1024 * 1024)


def estimated_draw_bytes(n_draws: int, J: int, I: int, K: int) -> int:
    """Rough size of the three draw files (about 24 bytes per CSV float)."""
    return int(n_draws) * (J + 3 * I + 3 * K + 4) * 24


# ═══════════════════════════════════════════════
# Responses
# ═══════════════════════════════════════════════

def read_responses(path: str | Path) -> ResponseMatrix:
    """Parse a response CSV: header of item names, cells 0, 1 or NA.

    Errors name the file, the 1-based data row and the column.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except FileNotFoundError as exc:
        raise InputError("response file not found", path=str(path)) from exc
    except pd.errors.EmptyDataError as exc:
        raise InputError("response file is empty", path=str(path)) from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot parse response file: {exc}", path=str(path)) from exc
    if frame.empty:
        raise InputError("response file has a header but no rows", path=str(path))

    cells = frame.apply(lambda col: col.str.strip())
    missing = cells.isin([NA_TOKEN, ''])
    allowed = missing | cells.isin(['0', '1'])
    if not allowed.all().all():
        row, col = np.argwhere(~allowed.to_numpy())[0]
        raise InputError(
            f"response must be 0, 1 or {NA_TOKEN}, got {cells.iat[row, col]!r}",
            path=str(path), row=int(row) + 1, column=frame.columns[col],
        )
    values = cells.mask(missing, '0').astype(np.int8).to_numpy()
    try:
        return ResponseMatrix(values=values, observed=~missing.to_numpy(), item_names=tuple(frame.columns))
    except InputError as exc:
        raise InputError(exc.message, path=str(path), row=exc.row, column=exc.column) from exc


def write_responses(path: str | Path, responses: ResponseMatrix) -> Path:
    frame = pd.DataFrame(responses.as_float(), columns=list(responses.item_names)).astype('Int64')
    return atomic_write_csv(path, frame)


# ═══════════════════════════════════════════════
# Simulation truth
# ═══════════════════════════════════════════════

def write_truth(
    out_dir: str | Path,
    items: ItemParameters,
    theta: np.ndarray,
    W: np.ndarray,
    mixture: MixtureParameters,
    item_names: tuple[str, ...],
) -> list[Path]:
    out_dir = Path(out_dir)
    return [
        atomic_write_csv(out_dir / TRUTH_ITEMS_FILE, pd.DataFrame({
            'item': list(item_names), 'a': items.a, 'b': items.b, 'c': items.c,
        })),
        atomic_write_csv(out_dir / TRUTH_THETA_FILE, pd.DataFrame({
            'individual': np.arange(1, theta.size + 1), 'theta': theta, 'component': np.asarray(W) + 1,
        })),
        atomic_write_csv(out_dir / TRUTH_MIXTURE_FILE, pd.DataFrame({
            'component': np.arange(1, mixture.K + 1), 'p': mixture.p, 'mu': mixture.mu, 'sigma2': mixture.sigma2,
        })),
    ]


def read_truth_theta(truth_dir: str | Path) -> np.ndarray:
    path = Path(truth_dir) / TRUTH_THETA_FILE
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise PostprocessingError(f"cannot read truth abilities {path}: {exc}") from exc
    if 'theta' not in frame.columns:
        raise PostprocessingError(f"{path} has no theta column")
    return frame['theta'].to_numpy(dtype=float)


# ═══════════════════════════════════════════════
# Draws
# ═══════════════════════════════════════════════

def _numbered(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{k + 1}" for k in range(n)]


def draw_frames(chain, rescale: Optional[RescaleSpec] = None) -> dict[str, pd.DataFrame]:
    """The draw tables of a ``ChainOutput``, keyed by file name."""
    it = {'iteration': chain.iterations}
    items = pd.DataFrame({
        **it,
        **dict(zip(_numbered('a', chain.I), chain.a.T)),
        **dict(zip(_numbered('b', chain.I), chain.b.T)),
        **dict(zip(_numbered('c', chain.I), chain.c.T)),
    })
    mixture = pd.DataFrame({
        **it,
        **dict(zip(_numbered('p', chain.K), chain.p.T)),
        **dict(zip(_numbered('mu', chain.K), chain.mu.T)),
        **dict(zip(_numbered('sigma2', chain.K), chain.sigma2.T)),
        'mixture_mean': chain.mixture_mean_draws(),
        'mixture_sd': chain.mixture_sd_draws(),
    })
    theta_cols = _numbered('theta', chain.J)
    frames = {
        DRAWS_ITEMS_FILE: items,
        DRAWS_MIXTURE_FILE: mixture,
        DRAWS_THETA_FILE: pd.concat([pd.DataFrame(it), pd.DataFrame(chain.theta, columns=theta_cols)], axis=1),
    }
    if rescale is not None:
        frames[DRAWS_THETA_RESCALED_FILE] = pd.concat(
            [pd.DataFrame(it), pd.DataFrame(chain.rescaled_theta(rescale), columns=theta_cols)], axis=1,
        )
    return frames


def chain_meta(chain) -> dict[str, Any]:
    return {
        'J': chain.J,
        'I': chain.I,
        'K': chain.K,
        'item_names': list(chain.item_names),
        'retained_draws': chain.n_retained,
        'sampler': chain.config.to_dict(),
        'model': asdict(chain.options),
        'priors': asdict(chain.priors),
        'counters': chain.counters.to_dict(),
        'acceptance_rates': chain.acceptance_rates(),
        'elapsed_seconds': chain.elapsed_seconds,
    }


def write_chain(out_dir: str | Path, chain, rescale: Optional[RescaleSpec] = None) -> list[Path]:
    """Write the draw files of ``chain`` into ``out_dir``."""
    out_dir = Path(out_dir)
    return [atomic_write_csv(out_dir / name, frame) for name, frame in draw_frames(chain, rescale).items()]


def read_meta(run_dir: str | Path) -> dict[str, Any]:
    path = Path(run_dir) / META_FILE
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise PostprocessingError(f"cannot read run metadata {path}: {exc}") from exc


def _read_draw_table(path: Path) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError as exc:
        raise PostprocessingError(f"draw file missing: {path}") from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise PostprocessingError(f"draw file {path} is empty or malformed: {exc}") from exc
    if frame.empty:
        raise PostprocessingError(f"draw file {path} holds no draws")
    if 'iteration' not in frame.columns:
        raise PostprocessingError(f"draw file {path} has no iteration column")
    return frame


def _block(frame: pd.DataFrame, prefix: str, n: int, path: Path) -> np.ndarray:
    expected = _numbered(prefix, n)
    missing = [c for c in expected if c not in frame.columns]
    if missing:
        raise PostprocessingError(f"{path} lacks columns {missing[:3]}{'...' if len(missing) > 3 else ''}")
    block = frame[expected].to_numpy(dtype=float)
    if not np.all(np.isfinite(block)):
        raise PostprocessingError(f"{path} has non-numeric {prefix} draws")
    return block


def read_chain(run_dir: str | Path):
    """Rebuild a ``ChainOutput`` from the files ``write_chain`` produced.

    Raises ``PostprocessingError`` on any schema mismatch.
    """
    from engine.chain import ChainCounters, ChainOutput, SamplerConfig

    run_dir = Path(run_dir)
    meta = read_meta(run_dir)
    try:
        J, I, K = int(meta['J']), int(meta['I']), int(meta['K'])
        config = SamplerConfig(**meta['sampler'])
        options = ModelOptions(**meta['model'])
        priors = PriorSpec(**meta['priors'])
    except (KeyError, TypeError, ValueError) as exc:
        raise PostprocessingError(f"run metadata in {run_dir} is incomplete: {exc}") from exc

    paths = {name: run_dir / name for name in (DRAWS_ITEMS_FILE, DRAWS_MIXTURE_FILE, DRAWS_THETA_FILE)}
    items = _read_draw_table(paths[DRAWS_ITEMS_FILE])
    mixture = _read_draw_table(paths[DRAWS_MIXTURE_FILE])
    theta = _read_draw_table(paths[DRAWS_THETA_FILE])
    iterations = items['iteration'].to_numpy()
    for name, frame in ((DRAWS_MIXTURE_FILE, mixture), (DRAWS_THETA_FILE, theta)):
        if not np.array_equal(frame['iteration'].to_numpy(), iterations):
            raise PostprocessingError(f"{name} iterations do not align with {DRAWS_ITEMS_FILE}")

    try:
        return ChainOutput(
            a=_block(items, 'a', I, paths[DRAWS_ITEMS_FILE]),
            b=_block(items, 'b', I, paths[DRAWS_ITEMS_FILE]),
            c=_block(items, 'c', I, paths[DRAWS_ITEMS_FILE]),
            p=_block(mixture, 'p', K, paths[DRAWS_MIXTURE_FILE]),
            mu=_block(mixture, 'mu', K, paths[DRAWS_MIXTURE_FILE]),
            sigma2=_block(mixture, 'sigma2', K, paths[DRAWS_MIXTURE_FILE]),
            theta=_block(theta, 'theta', J, paths[DRAWS_THETA_FILE]),
            iterations=iterations.astype(np.int64),
            config=config,
            options=options,
            priors=priors,
            counters=ChainCounters.from_dict(meta.get('counters', {})),
            item_names=tuple(meta.get('item_names', ())),
            elapsed_seconds=float(meta.get('elapsed_seconds', 0.0)),
        )
    except ValueError as exc:
        raise PostprocessingError(f"draw files in {run_dir} are inconsistent: {exc}") from exc
