"""Named, order-independent random substreams derived from a single seed."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"substream keys must be non-negative, got {part}")
    return int(part)


def substream(seed: int, *keys: int | str) -> np.random.Generator:
    """Return a generator for ``seed`` addressed by ``keys``.

    The same ``(seed, keys)`` always yields the same stream, whatever else was
    drawn before, so stages can run in any order.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def subseed(seed: int, *keys: int | str) -> int:
    """Integer seed for code that wants a plain int (e.g. jitted kernels)."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(seq.generate_state(1, dtype=np.uint32)[0])
