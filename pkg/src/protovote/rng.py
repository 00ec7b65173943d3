"""Deterministic random streams.

All randomness goes through Philox-4x64 (a counter-based generator) keyed by
``numpy.random.SeedSequence(seed, spawn_key=stream)``. A stream is named by a
tuple of non-negative integers, e.g. ``(fold, class_id)``, so every consumer
gets an independent generator that depends only on the master seed and its
name. Results therefore do not depend on call order, thread count or
platform.
"""

from __future__ import annotations

import hashlib

import numpy as np

_NAMES: dict[str, int] = {}


def stream_id(name: str) -> int:
    """Stable 32-bit integer for a textual stream label."""
    if name not in _NAMES:
        _NAMES[name] = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    return _NAMES[name]


def generator(seed: int, *stream: int | str) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    key = tuple(stream_id(s) if isinstance(s, str) else int(s) for s in stream)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *stream: int | str) -> int:
    """A 63-bit child seed, for APIs that take plain integers."""
    return int(generator(seed, *stream).integers(0, 2**63 - 1))
