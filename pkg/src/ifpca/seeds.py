"""Deterministic seed splitting for repeats, grid cells and workers."""

from __future__ import annotations

import numpy as np


def derive_seed(base: int, *keys: int) -> int:
    """64-bit seed for the job identified by integer ``keys`` under ``base``.

    Uses numpy's SeedSequence spawn-key mechanism, so distinct key tuples give
    statistically independent streams and the mapping never changes with the
    number or order of jobs.
    """
    if any(int(k) < 0 for k in keys):
        raise ValueError("seed keys must be non-negative integers")
    ss = np.random.SeedSequence(int(base), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def real_key(x: float) -> int:
    """Integer key for a grid coordinate (micro-unit resolution)."""
    return int(round(float(x) * 1_000_000))
