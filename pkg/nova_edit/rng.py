"""
Counter-based deterministic randomness.

An `Rng` is a (seed, stream, counter) triple over numpy's Philox generator.
Every draw uses a fresh Philox block keyed by (seed, stream) and positioned
by the counter, so a draw depends only on that triple and never on which
thread made it or on what other streams did. Pipelines fork one stream per
(stage, frame) instead of sharing a generator.
"""

from __future__ import annotations  # Support of `|` for type union in Python 3.9

import hashlib

import numpy as np

from nova_edit import cst


def stream_id(*names: object) -> int:
    """Hashes a path of stream names into a 64-bit stream id."""
    h = hashlib.blake2b(digest_size=8)
    for name in names:
        h.update(repr(name).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


class Rng:
    """Seeded counter-based generator. Not meant to be shared across threads."""

    def __init__(self, seed: int, stream: int = 0, counter: int = 0):
        self.seed: int = int(seed) & cst.SEED_MASK
        self.stream: int = int(stream) & cst.SEED_MASK
        self.counter: int = int(counter)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream}, counter={self.counter})"

    def state(self) -> tuple[int, int, int]:
        return self.seed, self.stream, self.counter

    def fork(self, *names: object) -> Rng:
        """Child stream, independent of the parent's counter."""
        return Rng(self.seed, stream_id(self.stream, *names))

    def generator(self) -> np.random.Generator:
        """
        Returns a numpy generator positioned at the current counter, and
        advances the counter. The counter occupies the second Philox word, so
        the blocks consumed by one call never overlap those of the next.
        """
        bit_gen = np.random.Philox(
            key=(self.stream << 64) | self.seed, counter=self.counter << 64
        )
        self.counter += 1
        return np.random.Generator(bit_gen)

    def random(self) -> float:
        """Uniform draw in [0, 1)."""
        return float(self.generator().random())

    def uniform(self, lo: float, hi: float) -> float:
        """Uniform draw in [lo, hi); returns lo when lo == hi."""
        if lo > hi:
            raise ValueError(f"Empty interval [{lo}, {hi}).")
        u = self.random()
        if lo == hi:
            return float(lo)
        value = lo + (hi - lo) * u
        return float(min(value, np.nextafter(hi, lo)))

    def integers(self, lo: int, hi: int) -> int:
        """Integer draw in [lo, hi)."""
        return int(self.generator().integers(lo, hi))

    def choice(self, n: int, size: int) -> list[int]:
        """`size` distinct integers from range(n)."""
        return [int(i) for i in self.generator().choice(n, size=size, replace=False)]

    def normal(self, shape: tuple[int, ...]) -> np.ndarray:
        """Standard normal float64 array."""
        return self.generator().standard_normal(shape)

    def uniform_array(self, shape: tuple[int, ...]) -> np.ndarray:
        """Uniform [0,1) float64 array."""
        return self.generator().random(shape)


def rng_uniform(r: Rng, lo: float, hi: float) -> float:
    """Deterministic uniform draw in [lo, hi) advancing the counter of `r`."""
    return r.uniform(lo, hi)
