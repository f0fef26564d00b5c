"""SplitMix64 pseudo-random generator.

Bit-exact with the reference algorithm of Steele, Lea and Flood (2014), so a
seed reproduces the same stream on every platform. Floats take the top 53
bits; normals use the Box-Muller transform, consuming two uniforms per pair.
"""
from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


class SplitMix64:
    """Small subset of :class:`numpy.random.Generator`'s interface."""

    def __init__(self, seed: int = 0):
        if not 0 <= int(seed) <= _MASK:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.state = int(seed)
        self._spare = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self, size=None):
        if size is None:
            return (self.next_u64() >> 11) * 2.0 ** -53
        n = int(np.prod(size))
        return np.array([(self.next_u64() >> 11) * 2.0 ** -53 for _ in range(n)]).reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self.random(size)

    def _normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def standard_normal(self, size=None):
        if size is None:
            return self._normal()
        n = int(np.prod(size))
        return np.array([self._normal() for _ in range(n)]).reshape(size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return loc + scale * self.standard_normal(size)

    def integers(self, low, high=None):
        """One integer in ``[low, high)`` (or ``[0, low)``), rejection-sampled."""
        if high is None:
            low, high = 0, low
        span = int(high) - int(low)
        if span <= 0:
            raise ValueError("empty range")
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_u64()
            if v < limit:
                return int(low) + v % span

    def exponential(self, scale=1.0, size=None):
        u = 1.0 - self.random(size)
        return -scale * np.log(u)
