"""Counter-based random number streams with deterministic child derivation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """Value-type handle on a Philox counter-based generator.

    Identical (seed, stream) pairs reproduce identical sequences bit-for-bit;
    distinct pairs give statistically independent streams. Streams are cheap
    to copy between threads; each call to generator() restarts the sequence.
    """

    seed: int
    stream: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream", int(self.stream) & _MASK64)

    def generator(self) -> np.random.Generator:
        key = self.seed | (self.stream << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        """Derive an independent substream, deterministic in (self, index)."""
        if index < 0:
            raise ValueError("child index must be nonnegative")
        mixed = _splitmix64(self.stream ^ _splitmix64((index + 1) & _MASK64))
        return RngStream(self.seed, mixed)
