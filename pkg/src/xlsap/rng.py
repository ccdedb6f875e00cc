"""SplitMix64: a small counter-based generator with xorshift-multiply mixing.

Every random decision in the toolkit flows through this generator so runs
are bit-reproducible across platforms and numpy versions. Draw ``i`` is a
pure function of ``(seed, i)``, which lets bulk draws be vectorized in numpy
and still match the scalar path exactly.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, seed: int = 0):
        self.seed = seed & _MASK
        self.counter = 0

    def derive(self, stream: int) -> "SplitMix64":
        """Independent generator keyed on this seed and ``stream``."""
        return SplitMix64(_mix((self.seed ^ _mix(stream + 1)) & _MASK))

    def next_u64(self) -> int:
        self.counter += 1
        return _mix((self.seed + self.counter * _GOLDEN) & _MASK)

    def u64_array(self, size: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        self.counter += size
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))

    def random(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_array(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.u64_array(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def randbelow(self, n: int) -> int:
        """Unbiased integer in ``[0, n)`` (Lemire's multiply-shift with rejection)."""
        if n <= 0:
            raise ValueError("n must be positive")
        threshold = ((1 << 64) - n) % n
        while True:
            m = self.next_u64() * n
            if (m & _MASK) >= threshold:
                return m >> 64

    def sample(self, population_size: int, k: int) -> list[int]:
        """``k`` distinct indices from ``range(population_size)`` in draw order."""
        if not 0 <= k <= population_size:
            raise ValueError(f"cannot draw {k} distinct items from {population_size}")
        # Partial Fisher-Yates over a sparse swap map; O(k) memory.
        swaps: dict[int, int] = {}
        out = []
        for i in range(k):
            j = i + self.randbelow(population_size - i)
            out.append(swaps.get(j, j))
            swaps[j] = swaps.get(i, i)
        return out
