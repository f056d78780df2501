"""Seeded random streams with stable cross-platform draw sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rng:
    """A (seed, stream) pair naming one reproducible random sequence.

    The same pair always yields the same draws: generators are built from
    a SeedSequence over both integers, so distinct streams of one seed are
    independent and any stream can be re-created at will.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng((int(self.seed), int(self.stream)))

    def child(self, stream: int) -> "Rng":
        """A sibling stream under the same seed."""
        return Rng(self.seed, stream)
