"""Deterministic 64-bit PRNG used wherever the package needs randomness.

Seeding uses the SplitMix64 finalizer; the stream generator is
xoshiro256**. Both algorithms are fixed and fully specified here, so any
run is reproducible from its integer seed alone, independent of Python or
numpy RNG state.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
_SM_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


class SplitMix64:
    """Weyl-sequence generator; used for seeding and seed derivation."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _SM_GAMMA) & MASK64
        return _mix64(self._state)


def derive_seed(root: int, *salts: int) -> int:
    """Fold integer salts into a root seed, one SplitMix64 step per salt.

    Positional: derive_seed(s, a, b) != derive_seed(s, b, a) in general.
    """
    x = root & MASK64
    for salt in salts:
        x = _mix64(x + _SM_GAMMA * ((salt & MASK64) + 1))
    return x


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** stream seeded from SplitMix64(seed)."""

    def __init__(self, seed: int):
        sm = SplitMix64(seed)
        s = [sm.next_u64() for _ in range(4)]
        if not any(s):
            s[0] = 1  # all-zero state is invalid for xoshiro
        self._s = s
        self._gauss: float | None = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform01(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.uniform01()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow requires n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def shuffle(self, seq: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randbelow(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """First k entries of a partial Fisher-Yates pass over range(n)."""
        if k > n:
            raise ValueError("sample larger than population")
        arr = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:k]

    def normal(self) -> float:
        """Standard normal via Box-Muller; pairs are cached."""
        if self._gauss is not None:
            g = self._gauss
            self._gauss = None
            return g
        u1 = self.uniform01()
        while u1 == 0.0:
            u1 = self.uniform01()
        u2 = self.uniform01()
        r = math.sqrt(-2.0 * math.log(u1))
        a = 2.0 * math.pi * u2
        self._gauss = r * math.sin(a)
        return r * math.cos(a)

    def normals(self, count: int) -> list[float]:
        return [self.normal() for _ in range(count)]
