"""
Preset Manager — Built-in and saved simulation presets.

Persists user-defined presets to a JSON file next to the other config
files and provides the immutable built-in study designs.  Uses the
atomic serialization pattern (`.tmp` + fsync + `os.replace` under a
`threading.Lock`).

A preset's ``settings`` hold the truth mixture (``p``, ``mu``, ``sigma2``)
and the default design size (``J``, ``I``, ``missing_rate``).
"""

from __future__ import annotations

import copy
import json
import logging
import threading
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from core.errors import InputError
from io_helpers import atomic_write_json
from model.state import MixtureParameters

logger = logging.getLogger(__name__)

PRESETS_FILENAME = "saved_simulation_presets.json"

_presets_lock = threading.Lock()


class PresetManager:
    """Lookup and CRUD for simulation presets."""

    SETTINGS_KEYS = ['J', 'I', 'missing_rate', 'p', 'mu', 'sigma2']

    # ── Immutable Built-in Presets ──────────────────────────────────

    _BUILTIN_PRESETS = [
        {
            'preset_id': 'study1',
            'preset_name': 'Study 1: bimodal',
            'description': '0.8 N(0, 1) + 0.2 N(2.5, 0.5²); 5000 individuals, 50 items.',
            'is_builtin': True,
            'settings': {'J': 5000, 'I': 50, 'missing_rate': 0.0,
                         'p': [0.8, 0.2], 'mu': [0.0, 2.5], 'sigma2': [1.0, 0.25]},
        },
        {
            'preset_id': 'study1_desk',
            'preset_name': 'Study 1 at desk scale',
            'description': 'Study 1 mixture with 2000 individuals and 40 items.',
            'is_builtin': True,
            'settings': {'J': 2000, 'I': 40, 'missing_rate': 0.0,
                         'p': [0.8, 0.2], 'mu': [0.0, 2.5], 'sigma2': [1.0, 0.25]},
        },
        {
            'preset_id': 'study2',
            'preset_name': 'Study 2: heavy tail',
            'description': '0.7 N(0, 1) + 0.3 N(0.5, 12²); 5000 individuals, 50 items.',
            'is_builtin': True,
            'settings': {'J': 5000, 'I': 50, 'missing_rate': 0.0,
                         'p': [0.7, 0.3], 'mu': [0.0, 0.5], 'sigma2': [1.0, 144.0]},
        },
        {
            'preset_id': 'study3',
            'preset_name': 'Study 3: skewed',
            'description': '0.7 N(0, 1) + 0.3 N(1.5, 1.8²); 5000 individuals, 50 items.',
            'is_builtin': True,
            'settings': {'J': 5000, 'I': 50, 'missing_rate': 0.0,
                         'p': [0.7, 0.3], 'mu': [0.0, 1.5], 'sigma2': [1.0, 3.24]},
        },
        {
            'preset_id': 'normal',
            'preset_name': 'Single normal',
            'description': 'N(0, 1) abilities (overfit checks); 2000 individuals, 40 items.',
            'is_builtin': True,
            'settings': {'J': 2000, 'I': 40, 'missing_rate': 0.0,
                         'p': [1.0], 'mu': [0.0], 'sigma2': [1.0]},
        },
        {
            'preset_id': 'pisa',
            'preset_name': 'PISA-like booklet design',
            'description': 'Study 1 mixture, 109 items with 67% of cells missing (about 36 answered each).',
            'is_builtin': True,
            'settings': {'J': 5000, 'I': 109, 'missing_rate': 0.67,
                         'p': [0.8, 0.2], 'mu': [0.0, 2.5], 'sigma2': [1.0, 0.25]},
        },
    ]

    # ── Constructor ─────────────────────────────────────────────────

    def __init__(self, config_dir: str | Path):
        self.presets_path = Path(config_dir) / PRESETS_FILENAME

    # ── Read ────────────────────────────────────────────────────────

    def load_presets(self) -> list[dict]:
        """User-defined presets on disk (never includes built-ins)."""
        if not self.presets_path.exists():
            return []
        try:
            with open(self.presets_path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            logger.warning(f"Ignoring unreadable presets file {self.presets_path}: {e}")
            return []
        presets = data.get('presets', []) if isinstance(data, dict) else []
        return presets if isinstance(presets, list) else []

    def get_builtin_presets(self) -> list[dict]:
        return copy.deepcopy(self._BUILTIN_PRESETS)

    def all_presets(self) -> list[dict]:
        return self.get_builtin_presets() + self.load_presets()

    def find(self, name_or_id: str) -> Optional[dict]:
        """Match on ``preset_id`` first, then on ``preset_name``."""
        presets = self.all_presets()
        for key in ('preset_id', 'preset_name'):
            for preset in presets:
                if preset.get(key) == name_or_id:
                    return preset
        return None

    def get(self, name_or_id: str) -> dict:
        preset = self.find(name_or_id)
        if preset is None:
            known = ', '.join(p['preset_id'] for p in self.all_presets())
            raise InputError(f"unknown preset {name_or_id!r} (known: {known})")
        return preset

    # ── Write (Atomic) ──────────────────────────────────────────────

    def _save_all(self, presets: list[dict]) -> None:
        with _presets_lock:
            atomic_write_json(self.presets_path, {'presets': presets})

    def save_preset(self, name: str, description: str, settings: dict) -> dict:
        """Validate, create and persist a user preset."""
        missing = [k for k in self.SETTINGS_KEYS if k not in settings]
        if missing:
            raise InputError(f"preset settings lack {', '.join(missing)}")
        # Raises DomainError for an invalid mixture.
        MixtureParameters(p=settings['p'], mu=settings['mu'], sigma2=settings['sigma2'])
        presets = self.load_presets()
        new_preset = {
            'preset_id': f"preset_{uuid.uuid4().hex[:12]}",
            'preset_name': name.strip(),
            'description': description.strip() if description else '',
            'created_at': datetime.now(timezone.utc).isoformat(),
            'is_builtin': False,
            'settings': {k: settings[k] for k in self.SETTINGS_KEYS} | {
                k: v for k, v in settings.items() if k == 'unidentified_truth'
            },
        }
        presets.append(new_preset)
        self._save_all(presets)
        logger.info(f"Saved preset {new_preset['preset_name']!r} as {new_preset['preset_id']}")
        return new_preset

    def delete_preset(self, preset_id: str) -> bool:
        """Delete a user preset by ID; built-ins cannot be deleted."""
        presets = self.load_presets()
        remaining = [p for p in presets if p.get('preset_id') != preset_id]
        if len(remaining) == len(presets):
            return False
        self._save_all(remaining)
        return True
