"""SplitMix64, vectorized with numpy so fixtures are byte-stable everywhere.

Output ``i`` (1-based) of a stream seeded with ``s`` is
``mix(s + i * 0x9E3779B97F4A7C15 mod 2**64)`` where ``mix`` is the standard
SplitMix64 finalizer. Uniform doubles take the top 53 bits; normals use
Box-Muller on consecutive uniform pairs (cosine branch only).
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        self.state = int(seed) & _MASK

    def next_u64(self, n: int) -> np.ndarray:
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GAMMA
            out = _mix(z)
        self.state = (self.state + n * int(_GAMMA)) & _MASK
        return out

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n).reshape(n, 2) if n else np.empty((0, 2))
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))
        return radius * np.cos(2.0 * np.pi * u[:, 1])

    def choice_sign(self) -> int:
        return 1 if self.uniform(1)[0] < 0.5 else -1
