"""
RNG Streams — Counter-based, reproducible random streams for MixIRT.

An ``RngStream`` is identified by ``(seed, stream_id)`` plus an optional
path of sub-keys.  The bit generator is numpy's Philox (a counter-based
generator) keyed through a ``SeedSequence`` whose spawn key is the stream
path, so the same identity always yields the same draws and distinct
identities yield independent streams.

Sub-streams are how the sampler stays reproducible under parallelism:
the chain driver derives ``stream.substream(sweep, block, chunk)`` for
every chunk of work before any worker touches it.

Usage:
    from core.rng import RngStream
    rng = RngStream(seed=20240101)
    x = rng.generator.standard_normal(10)
    chunk_rng = rng.substream(12, 3, 0)
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from core.errors import DomainError

_UINT64_MAX = 2**64 - 1


class RngStream:
    """A single, non-shareable random stream.

    A stream must never be used by two concurrent callers; derive one
    ``substream`` per worker instead.
    """

    __slots__ = ("seed", "stream_id", "path", "_generator")

    def __init__(self, seed: int, stream_id: int = 0, path: tuple[int, ...] = ()):
        for name, value in (("seed", seed), ("stream_id", stream_id), *((f"path[{n}]", v) for n, v in enumerate(path))):
            if not 0 <= int(value) <= _UINT64_MAX:
                raise DomainError(f"{name} must be a 64-bit unsigned integer, got {value}")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.path = tuple(int(p) for p in path)
        self._generator: Optional[np.random.Generator] = None

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self.path})"

    @property
    def generator(self) -> np.random.Generator:
        """The underlying numpy generator, created on first use."""
        if self._generator is None:
            seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self.path))
            self._generator = np.random.Generator(np.random.Philox(seq))
        return self._generator

    def substream(self, *keys: int) -> "RngStream":
        """Derive an independent child stream addressed by ``keys``."""
        return RngStream(self.seed, self.stream_id, self.path + tuple(keys))
