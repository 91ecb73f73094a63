"""
Errors — Exception hierarchy and CLI exit codes for MixIRT.

Every failure the tool can report is one of these classes.  The CLI maps
them to exit codes in one place (``start.main``) so library code never
calls ``sys.exit``.

Usage:
    from core.errors import InputError, SamplingError, SamplerError, ExitCode
"""

from __future__ import annotations

from enum import IntEnum
from typing import Any, Optional


class ExitCode(IntEnum):
    OK = 0
    UNEXPECTED = 1
    INPUT = 2
    SAMPLER = 3
    POSTPROCESSING = 4


# ═══════════════════════════════════════════════
# Base
# ═══════════════════════════════════════════════

class MixIrtError(Exception):
    """Root of all project errors."""

    exit_code: ExitCode = ExitCode.UNEXPECTED


class DomainError(MixIrtError, ValueError):
    """A precondition of a kernel or domain type was violated."""

    exit_code = ExitCode.SAMPLER


# ═══════════════════════════════════════════════
# Input / config
# ═══════════════════════════════════════════════

class InputError(MixIrtError):
    """A file or config value could not be parsed or failed validation.

    ``row`` and ``column`` are 1-based positions in the offending file when
    known; ``path`` names the file.
    """

    exit_code = ExitCode.INPUT

    def __init__(
        self,
        message: str,
        *,
        path: Optional[str] = None,
        row: Optional[int] = None,
        column: Optional[str | int] = None,
    ):
        self.message = message
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path:
            where.append(str(path))
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(f"{prefix}{message}")


# ═══════════════════════════════════════════════
# Sampling
# ═══════════════════════════════════════════════

class SamplingError(MixIrtError):
    """A draw could not be produced (negligible mass, exhausted budget).

    ``report`` holds the numbers a user needs to diagnose the failure,
    e.g. posterior Dirichlet parameters or the observed acceptance rate.
    """

    exit_code = ExitCode.SAMPLER

    def __init__(self, message: str, report: Optional[dict[str, Any]] = None):
        self.report = report or {}
        super().__init__(message)


class NumericalError(SamplingError):
    """A posterior covariance was not symmetric positive definite."""


class SamplerError(MixIrtError):
    """A block update failed inside the chain driver.

    Wraps the original error with the block name and the 1-based sweep
    index (0 means initialization).
    """

    exit_code = ExitCode.SAMPLER

    def __init__(self, block: str, iteration: int, cause: Exception):
        self.block = block
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"block {block} failed at iteration {iteration}: {cause}")


# ═══════════════════════════════════════════════
# Post-processing
# ═══════════════════════════════════════════════

class PostprocessingError(MixIrtError):
    """Summaries, density export or evidence could not be computed."""

    exit_code = ExitCode.POSTPROCESSING
