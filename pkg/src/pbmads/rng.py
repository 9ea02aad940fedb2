"""Counter-based deterministic random streams.

Every draw is a pure function of a 64-bit key and a draw index, so the order
in which points get evaluated (or cached, or farmed out to workers) can never
change the sample a given (seed, point, channel, index) combination receives.
Only IEEE-exact operations are used on the float side: bit-identical replay
holds across platforms and builds.
"""
from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a cheap 64-bit bijective scrambler."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def derive_key(*parts: int | str) -> int:
    """Fold seed components (ints or short tags) into one stream key."""
    key = 0x5851F42D4C957F2D
    for part in parts:
        if isinstance(part, str):
            for b in part.encode():
                key = mix64(key ^ b)
        else:
            key = mix64(key ^ (int(part) & _MASK))
    return key


def _scramble(z: int) -> int:
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def uniforms(key: int, start: int, count: int) -> np.ndarray:
    """Entries start..start+count-1 of stream `key`, float64 in [0, 1).

    The scalar and vectorized paths compute the identical function; the split
    is purely a performance matter (tiny blocks are cheaper without numpy).
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    if count >= 64:
        idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z = np.uint64(key & _MASK) + idx * np.uint64(_GOLDEN)  # wraps mod 2**64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
        z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
    out = np.empty(count)
    for i in range(count):
        z = (key + (start + i + 1) * _GOLDEN) & _MASK
        out[i] = (_scramble(z) >> 11) * 2.0**-53
    return out


def unit_vector(key: int, n: int) -> tuple[float, ...]:
    """Deterministic pseudo-random direction with unit 2-norm.

    Components are uniform in [-1, 1] before normalization. sqrt and divide
    are correctly rounded everywhere, so the result is platform-stable, which
    transcendental-based samplers would not guarantee.
    """
    if n < 1:
        raise ValueError("dimension must be positive")
    attempt = 0
    while True:
        u = uniforms(derive_key(key, attempt), 0, n)
        v = [2.0 * float(x) - 1.0 for x in u]
        s = 0.0
        for x in v:
            s += x * x
        if s > 1e-12:
            norm = math.sqrt(s)
            return tuple(x / norm for x in v)
        attempt += 1
