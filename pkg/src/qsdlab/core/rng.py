"""Deterministic stream management for Monte Carlo runs.

Every stochastic routine in the package draws from an explicit RngStream.  A
stream is identified by a seed and a spawn path; child streams are derived
through numpy's SeedSequence spawn keys, which is a counter-based, collision
free scheme.  Trajectory i of a batch always consumes child stream i of the
batch stream, so its draws do not depend on how many other trajectories run,
in which order, or on how work is scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RngStream"]


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream identified by (seed, path).

    Identical (seed, path) pairs reproduce identical draw sequences bit for
    bit; distinct paths are statistically independent.  ``path`` is a spawn
    key in the SeedSequence sense; a plain integer stream id is the length-one
    path ``(stream_id,)``.
    """

    seed: int
    path: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed!r}")
        if not all(isinstance(p, int) and p >= 0 for p in self.path):
            raise ValueError(f"path must contain nonnegative integers, got {self.path!r}")

    def child(self, index: int) -> "RngStream":
        """Return the child stream obtained by appending ``index`` to the path."""
        return RngStream(self.seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        """Construct a fresh Philox generator positioned at the stream start."""
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))
