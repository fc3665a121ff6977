"""Deterministic random streams.

Every randomized operation in the pipeline draws from an ``RngState`` so that
identical seeds reproduce identical runs bit-for-bit. A state tracks its draw
position; two states with the same seed and the same call sequence yield the
same values. ``spawn`` derives independent child streams deterministically.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RngState"]

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    # splitmix64 finalizer; decorrelates derived seeds
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class RngState:
    """Seeded PCG64 stream with a draw-position counter."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.position = 0
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def spawn(self, key: int) -> "RngState":
        """Derive an independent child stream; deterministic in (seed, key)."""
        return RngState(_mix64(self.seed + _SPLITMIX_GAMMA * (int(key) + 1)))

    def normal(self, shape=()) -> np.ndarray:
        self.position += 1
        return self._gen.standard_normal(size=shape)

    def uniform(self, low: float = 0.0, high: float = 1.0, shape=()) -> np.ndarray:
        self.position += 1
        return self._gen.uniform(low, high, size=shape)

    def integers(self, low: int, high: int, shape=()):
        self.position += 1
        return self._gen.integers(low, high, size=shape)

    def rademacher(self, shape=()) -> np.ndarray:
        self.position += 1
        return self._gen.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0

    def permutation(self, n: int) -> np.ndarray:
        self.position += 1
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        self.position += 1
        return self._gen.choice(n, size=size, replace=replace)
