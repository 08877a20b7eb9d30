"""Counter-based random streams.

Every uniform variate is a pure function of ``(master seed, index, tag,
counter)``: a SplitMix64 sequence whose starting key is derived from the
first three.  Trajectory blocks can therefore be advanced in any order, in
any number of workers, and on any platform and still reproduce bit for bit.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


class Tag(IntEnum):
    """Purpose tags keeping substreams disjoint."""

    INIT = 1
    SIGN = 2
    DEVIATION = 3
    FACTORIZATION = 4
    KINEMATICS = 5


def _u64(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x.astype(np.uint64, copy=False)
    if isinstance(x, (int, np.integer)):
        return np.asarray(int(x) & _MASK64, dtype=np.uint64)
    return np.asarray(x, dtype=np.int64).astype(np.uint64)


def mix64(z) -> np.ndarray:
    """SplitMix64 output function (Stafford variant 13), elementwise."""
    z = np.array(_u64(z), dtype=np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= _M1
        z ^= z >> np.uint64(27)
        z *= _M2
        z ^= z >> np.uint64(31)
    return z


def stream_keys(seed: int, indices, tag: int) -> np.ndarray:
    """Per-index stream keys for one purpose tag."""
    if not 0 <= int(seed) <= _MASK64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    idx = _u64(np.atleast_1d(np.asarray(indices, dtype=np.int64)))
    with np.errstate(over="ignore"):
        base = mix64(_u64(seed) ^ mix64(_u64(int(tag)) * GOLDEN))
        return mix64(base + (idx + np.uint64(1)) * GOLDEN)


def uniforms_from_keys(keys: np.ndarray, counter: int) -> np.ndarray:
    """Uniform variates in [0, 1), one per key, at a given counter."""
    with np.errstate(over="ignore"):
        state = keys + np.uint64((int(counter) + 1) & _MASK64) * GOLDEN
    bits = mix64(state) >> np.uint64(11)
    return bits.astype(np.float64) * _TO_UNIT


class Stream:
    """A sequential view of one counter-based stream.

    ``Stream(seed, index, tag)`` is cheap to create; draws advance an
    internal counter, so two streams built from the same triple yield the
    same numbers.
    """

    def __init__(self, seed: int, index: int = 0, tag: int = Tag.DEVIATION):
        self.seed = int(seed)
        self.index = int(index)
        self.tag = int(tag)
        self.key = stream_keys(seed, [index], tag)[0]
        self.counter = 0

    def uniform(self, size: int | None = None):
        n = 1 if size is None else int(size)
        counters = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = self.key + (counters + np.uint64(1)) * GOLDEN
        out = (mix64(state) >> np.uint64(11)).astype(np.float64) * _TO_UNIT
        self.counter += n
        return float(out[0]) if size is None else out

    def spawn(self, tag: int) -> "Stream":
        return Stream(self.seed, self.index, tag)

    def __repr__(self) -> str:
        return f"Stream(seed={self.seed}, index={self.index}, tag={self.tag}, counter={self.counter})"
