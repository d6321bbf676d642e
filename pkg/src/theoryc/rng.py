"""Deterministic counter-based random streams.

Every random quantity in the pipeline is derived from a 64-bit key built with
`mix`.  Streams are pure functions of (key, index), so results never depend on
iteration order, thread scheduling, or numpy's global state.  The generator is
a vectorized SplitMix64: fast, stateless, and reproducible across platforms.
"""

from __future__ import annotations

import numpy as np

_PHI = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def _finalize(z: int) -> int:
    z = (z ^ (z >> 30)) * _MIX1 & _MASK
    z = (z ^ (z >> 27)) * _MIX2 & _MASK
    return z ^ (z >> 31)


def mix(*parts: int) -> int:
    """Fold any number of integers into one 64-bit stream key."""
    state = 0x243F6A8885A308D3
    for p in parts:
        state = _finalize((state + _PHI + (int(p) & _MASK)) & _MASK)
    return state


def _raw(key: int, count: int) -> np.ndarray:
    """SplitMix64 outputs for counters 0..count-1 under `key` (uint64)."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(key & _MASK) + np.uint64(_PHI) * idx
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def uniform(key: int, count: int) -> np.ndarray:
    """i.i.d. doubles in [0, 1) with 53-bit resolution."""
    return (_raw(key, count) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def uniform_signed(key: int, count: int, bound: float) -> np.ndarray:
    """i.i.d. doubles uniform on [-bound, bound)."""
    return uniform(key, count) * (2.0 * bound) - bound


def normal(key: int, count: int) -> np.ndarray:
    """i.i.d. standard normal via Box-Muller on two disjoint substreams."""
    u1 = uniform(mix(key, 0x4E4F524D), count)
    u2 = uniform(mix(key, 0x414E474C), count)
    # shift u1 away from zero so log() stays finite
    r = np.sqrt(-2.0 * np.log1p(-u1))
    return r * np.cos(2.0 * np.pi * u2)


def integers(key: int, count: int, high: int) -> np.ndarray:
    """i.i.d. integers uniform on [0, high)."""
    return (_raw(key, count) % np.uint64(high)).astype(np.int64)
