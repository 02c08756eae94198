"""Deterministic counter-based random number generation.

Every random decision in the toolkit flows through ``CounterRng``, a
SplitMix64-style generator in counter mode.  A stream is keyed by the triple
``(master_seed, lane, index)`` and its i-th output is

    out_i = mix64(key + (i + 1) * GOLDEN)

where ``key`` is derived by chained mixing of the triple and ``mix64`` is the
SplitMix64 finalizer.  The scheme is documented here because serialized
results depend on it: the algorithm is frozen and pinned by golden tests, and
must not change between releases.

Counter mode means streams are splittable (distinct key triples give
independent streams) and random-access (output i does not depend on outputs
< i), so parallel workers can draw from disjoint streams with results that do
not depend on scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_LANE_SALT = 0xD1B54A32D192ED03
_INDEX_SALT = 0x8CB92BA72F3D8DD7


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a bijective 64-bit mixing function."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_key(master_seed: int, lane: int, index: int) -> int:
    """Derive the 64-bit stream key for a (master_seed, lane, index) triple."""
    k = mix64(master_seed & _MASK)
    k = mix64(k ^ ((lane & _MASK) * _LANE_SALT & _MASK))
    k = mix64(k ^ ((index & _MASK) * _INDEX_SALT & _MASK))
    return k


class CounterRng:
    """Deterministic stream of 64-bit outputs keyed by (seed, lane, index)."""

    def __init__(self, master_seed: int, lane: int = 0, index: int = 0):
        self.key = derive_key(master_seed, lane, index)
        self._counter = 0

    def next_u64(self) -> int:
        self._counter += 1
        return mix64((self.key + self._counter * _GOLDEN) & _MASK)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        v = self.next_u64()
        while v >= limit:
            v = self.next_u64()
        return v % n

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle_indices(self, k: int) -> list[int]:
        """Fisher-Yates permutation of range(k); identity is a possible outcome."""
        mapping = list(range(k))
        for i in range(k - 1, 0, -1):
            j = self.randbelow(i + 1)
            mapping[i], mapping[j] = mapping[j], mapping[i]
        return mapping


def counter_block(key: int, start: int, count: int) -> np.ndarray:
    """Vectorized outputs [start, start+count) of the stream with this key.

    Equals ``CounterRng`` outputs at the same counter positions; used for bulk
    synthetic-text generation.
    """
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = (np.uint64(key) + idx * np.uint64(_GOLDEN))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))
