"""Seeded, splittable random streams.

Every stochastic routine in this package draws from a :class:`RandomSource`,
a (master_seed, stream_index) pair.  Each named substream is realised as a
counter-based Philox generator keyed on (master_seed, stream_index, tag), so

* identical (master_seed, stream_index) pairs reproduce draws bit for bit,
* distinct stream_index values (replicas, CLI commands) are independent,
* the substreams of one source (driving noise, event clocks, selection
  draws, ...) are mutually independent.

Replica fan-out uses disjoint stream_index ranges: replica r of an operation
seeded with source s draws from s.child(r).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Substream tags.  The particle simulator uses the first four; other modules
# reuse DRIVING/CLOCK for their own Gaussian/exponential draws and the
# remaining tags for auxiliary uniforms.
TAG_DRIVING = 0    # Brownian increments
TAG_CLOCK = 1      # exponential event clocks
TAG_INDEX = 2      # uniform particle index at branch events
TAG_SELECT = 3     # Bernoulli left/right selection
TAG_UNIFORM_A = 4  # auxiliary uniforms (bridge crossings, left barrier)
TAG_UNIFORM_B = 5  # auxiliary uniforms (bridge crossings, right barrier)
TAG_INITIAL = 6    # initial-condition sampling


@dataclass(frozen=True)
class RandomSource:
    """Key for a family of independent, reproducible random substreams."""

    master_seed: int
    stream_index: int = 0

    def __post_init__(self) -> None:
        if not (0 <= int(self.master_seed) < 2**64):
            raise ValueError("master_seed must fit in an unsigned 64-bit integer")
        if int(self.stream_index) < 0:
            raise ValueError("stream_index must be non-negative")

    def generator(self, tag: int) -> np.random.Generator:
        """Fresh generator for substream `tag`; same key -> same draws."""
        seq = np.random.SeedSequence(
            entropy=int(self.master_seed),
            spawn_key=(int(self.stream_index), int(tag)),
        )
        return np.random.Generator(np.random.Philox(seq))

    def child(self, offset: int) -> "RandomSource":
        """Source for replica `offset`; callers keep offset ranges disjoint."""
        if offset < 0:
            raise ValueError("offset must be non-negative")
        return RandomSource(self.master_seed, self.stream_index + offset)
