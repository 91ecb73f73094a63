"""
Progress Dashboard — Progress reporting for long sampler runs.

The chain driver hands a ``ProgressReporter`` the index of each finished
sweep; every ``every`` sweeps (and on the last one) it logs one line with
the percentage, throughput and ETA.  Rendering is a pure function of a
``ProgressMetrics`` frame so it can be tested without a clock.

Usage:
    from engine.progress_dashboard import ProgressReporter
    reporter = ProgressReporter(total=20000, every=500)
    reporter.update(sweep, phase='burn-in')
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

logger = logging.getLogger(__name__)


# ═══════════════════════════════════════════════
# Dataclasses
# ═══════════════════════════════════════════════

@dataclass
class ProgressMetrics:
    """Values needed to render a single progress frame."""
    current: int = 0
    total: int = 1
    elapsed_seconds: float = 0.0
    phase: str = "sampling"
    p1: Optional[float] = None
    acceptance: dict[str, float] = field(default_factory=dict)


@dataclass
class ProgressReporter:
    """Emits a progress line every ``every`` sweeps.

    ``every = 0`` disables reporting.  ``sink`` defaults to ``logger.info``.
    """
    total: int
    every: int = 500
    sink: Optional[Callable[[str], None]] = None
    clock: Callable[[], float] = time.monotonic
    start_time: float = field(default=0.0, init=False)
    lines_emitted: int = field(default=0, init=False)

    def __post_init__(self):
        self.start_time = self.clock()
        if self.sink is None:
            self.sink = logger.info

    def update(
        self,
        current: int,
        *,
        phase: str = "sampling",
        p1: Optional[float] = None,
        acceptance: Optional[dict[str, float]] = None,
    ) -> None:
        if self.every <= 0:
            return
        if current % self.every and current != self.total:
            return
        metrics = ProgressMetrics(
            current=current,
            total=self.total,
            elapsed_seconds=self.clock() - self.start_time,
            phase=phase,
            p1=p1,
            acceptance=dict(acceptance or {}),
        )
        self.sink(render_progress_line(metrics))
        self.lines_emitted += 1


# ═══════════════════════════════════════════════
# Render Functions
# ═══════════════════════════════════════════════

def format_eta(seconds: float) -> str:
    seconds = max(0, int(round(seconds)))
    hours, rest = divmod(seconds, 3600)
    minutes, secs = divmod(rest, 60)
    return f"{hours}:{minutes:02d}:{secs:02d}" if hours else f"{minutes:02d}:{secs:02d}"


def render_progress_line(metrics: ProgressMetrics) -> str:
    """One log line: phase, sweep counter, percent, rate and ETA."""
    if metrics.total > 0:
        percent = min(100, int(metrics.current / metrics.total * 100))
    else:
        percent = 0
    rate = metrics.current / metrics.elapsed_seconds if metrics.elapsed_seconds > 0 else 0.0
    remaining = max(0, metrics.total - metrics.current)
    eta = format_eta(remaining / rate) if rate > 0 else "--:--"
    line = f"[{metrics.phase}] sweep {metrics.current}/{metrics.total} ({percent}%) | {rate:.1f} sweeps/s | ETA {eta}"
    if metrics.p1 is not None:
        line += f" | p1={metrics.p1:.3f}"
    for name, share in metrics.acceptance.items():
        line += f" | acc[{name}]={share:.3f}"
    return line
