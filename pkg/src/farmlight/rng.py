"""Deterministic random streams: SplitMix64-seeded xoshiro256**.

Every stochastic choice in this project (datasets, weight init, shuffles,
simulated packet loss) flows through :class:`Rng` so that a 64-bit seed pins
the whole run, independent of platform or interpreter hash randomization.
The generator follows the published reference constants of SplitMix64 and
xoshiro256**.
"""

from __future__ import annotations

import hashlib
import math

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    """One SplitMix64 step; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** stream seeded via SplitMix64 from a 64-bit integer."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3", "_gauss_spare")

    def __init__(self, seed: int):
        state = seed & _MASK64
        state, self._s0 = _splitmix64(state)
        state, self._s1 = _splitmix64(state)
        state, self._s2 = _splitmix64(state)
        state, self._s3 = _splitmix64(state)
        self._gauss_spare: float | None = None

    def next_u64(self) -> int:
        s1 = self._s1
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 = self._s2 ^ self._s0
        s3 = self._s3 ^ s1
        self._s1 = s1 ^ s2
        self._s0 = self._s0 ^ s3
        self._s2 = s2 ^ t
        self._s3 = _rotl(s3, 45)
        return result

    def random(self) -> float:
        """Uniform f64 in [0, 1), using the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Gaussian draw via Box-Muller; consumes draws in a fixed pattern."""
        if self._gauss_spare is not None:
            z = self._gauss_spare
            self._gauss_spare = None
            return mu + sigma * z
        # u1 in (0, 1] keeps the log finite.
        u1 = ((self.next_u64() >> 11) + 1) * 2.0**-53
        u2 = (self.next_u64() >> 11) * 2.0**-53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        z0 = r * math.cos(theta)
        self._gauss_spare = r * math.sin(theta)
        return mu + sigma * z0

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        threshold = ((1 << 64) // n) * n
        while True:
            x = self.next_u64()
            if x < threshold:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out.extend(self.next_u64().to_bytes(8, "little"))
        return bytes(out[:n])

    def uuid4(self) -> str:
        """UUIDv4-formatted string carved from the stream (reproducible ids)."""
        b = bytearray(self.bytes(16))
        b[6] = (b[6] & 0x0F) | 0x40
        b[8] = (b[8] & 0x3F) | 0x80
        h = b.hex()
        return f"{h[0:8]}-{h[8:12]}-{h[12:16]}-{h[16:20]}-{h[20:32]}"


def derive_seed(seed: int, tag: str) -> int:
    """Stable child seed for a named substream (disjoint from siblings)."""
    digest = hashlib.sha256((seed & _MASK64).to_bytes(8, "big") + tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
