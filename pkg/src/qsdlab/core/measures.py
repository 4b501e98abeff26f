"""Finitely supported measures and total variation distance.

Discrete states are atoms keyed by integer coordinate tuples.  Continuous
samples are first pushed through a shared histogram grid (BinGrid) and then
treated the same way.  The total variation convention throughout the package
is sup over |f| <= 1 of |mu(f) - nu(f)|, i.e. the full L1 distance between
the weight vectors, with range [0, 2]; outputs that tabulate TV also carry
the half-L1 value so both common conventions are on record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "BinGrid",
    "EmpiricalMeasure",
    "tv_distance",
    "tv_half",
]

_MASS_RTOL = 1e-12


@dataclass(frozen=True)
class BinGrid:
    """Per-axis histogram edges used to discretize continuous samples.

    Samples outside the box are clipped into the first / last bin of the
    axis, so the grid always defines a total map from states to bins.
    """

    edges: tuple[tuple[float, ...], ...]  # one strictly increasing edge tuple per axis

    def __post_init__(self) -> None:
        for ax, e in enumerate(self.edges):
            arr = np.asarray(e, dtype=float)
            if arr.size < 2 or not np.all(np.diff(arr) > 0):
                raise ValueError(f"axis {ax}: edges must be strictly increasing with >= 2 entries")

    @property
    def dimension(self) -> int:
        return len(self.edges)

    @classmethod
    def from_samples(
        cls,
        samples: Iterable[np.ndarray],
        bins_per_axis: int = 40,
        quantile_lo: float = 0.001,
        quantile_hi: float = 0.999,
    ) -> "BinGrid":
        """Build a shared grid over the pooled quantile box of the samples.

        Args:
            samples: arrays of shape (n_i, d), pooled before taking quantiles.
            bins_per_axis: number of equal-width bins per axis.
            quantile_lo: lower quantile of the pooled samples per axis.
            quantile_hi: upper quantile of the pooled samples per axis.
        """
        pool = np.concatenate([np.asarray(s, dtype=float) for s in samples], axis=0)
        if pool.ndim != 2 or pool.shape[0] == 0:
            raise ValueError("need at least one sample of shape (n, d)")
        lo = np.quantile(pool, quantile_lo, axis=0)
        hi = np.quantile(pool, quantile_hi, axis=0)
        # degenerate axes get a symmetric pad so the edges stay increasing
        width = np.where(hi > lo, hi - lo, np.maximum(np.abs(lo), 1.0) * 1e-6)
        hi = np.where(hi > lo, hi, lo + width)
        edges = tuple(
            tuple(np.linspace(lo[ax], hi[ax], bins_per_axis + 1)) for ax in range(pool.shape[1])
        )
        return cls(edges)

    def assign(self, states: np.ndarray) -> np.ndarray:
        """Map states of shape (n, d) to integer bin indices of shape (n, d)."""
        states = np.atleast_2d(np.asarray(states, dtype=float))
        if states.shape[1] != self.dimension:
            raise ValueError(f"states have dimension {states.shape[1]}, grid has {self.dimension}")
        out = np.empty(states.shape, dtype=np.int64)
        for ax in range(self.dimension):
            e = np.asarray(self.edges[ax])
            idx = np.searchsorted(e, states[:, ax], side="right") - 1
            out[:, ax] = np.clip(idx, 0, len(e) - 2)
        return out


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Nonnegative measure with finite support on state tuples.

    ``atoms`` maps a state tuple to a positive weight.  ``bin_grid`` is set
    when the measure was produced by histogram binning of continuous samples;
    TV distances are only defined between measures carrying the same grid.
    """

    atoms: Mapping[tuple, float]
    bin_grid: BinGrid | None = None
    _mass: float = field(init=False, repr=False, compare=False, default=0.0)

    def __post_init__(self) -> None:
        clean: dict[tuple, float] = {}
        for state, w in self.atoms.items():
            w = float(w)
            if not math.isfinite(w) or w < 0.0:
                raise ValueError(f"atom {state!r} has invalid weight {w!r}")
            if w > 0.0:
                clean[tuple(state)] = w
        object.__setattr__(self, "atoms", clean)
        object.__setattr__(self, "_mass", float(sum(clean.values())))

    @property
    def mass(self) -> float:
        return self._mass

    @property
    def is_normalized(self) -> bool:
        return abs(self._mass - 1.0) <= _MASS_RTOL * max(1.0, self._mass)

    def normalized(self) -> "EmpiricalMeasure":
        if self._mass <= 0.0:
            raise ValueError("cannot normalize a measure with zero mass")
        return EmpiricalMeasure(
            {s: w / self._mass for s, w in self.atoms.items()}, bin_grid=self.bin_grid
        )

    @classmethod
    def from_states(
        cls,
        states: np.ndarray,
        weights: np.ndarray | None = None,
        bin_grid: BinGrid | None = None,
    ) -> "EmpiricalMeasure":
        """Empirical measure of a sample, optionally binned through a grid.

        Args:
            states: array of shape (n, d); integer states are used as-is,
                continuous states require ``bin_grid``.
            weights: per-sample weights; defaults to 1/n each.
            bin_grid: histogram grid applied before counting.
        """
        states = np.atleast_2d(np.asarray(states))
        n = states.shape[0]
        if n == 0:
            raise ValueError("empty sample")
        if weights is None:
            weights = np.full(n, 1.0 / n)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (n,):
                raise ValueError("weights must have one entry per sample")
        keys = bin_grid.assign(states) if bin_grid is not None else states
        atoms: dict[tuple, float] = {}
        for row, w in zip(keys, weights):
            key = tuple(int(v) if float(v).is_integer() else float(v) for v in row)
            atoms[key] = atoms.get(key, 0.0) + float(w)
        return cls(atoms, bin_grid=bin_grid)

    def support_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Return (states, weights) arrays in sorted state order."""
        items = sorted(self.atoms.items())
        states = np.array([s for s, _ in items])
        weights = np.array([w for _, w in items])
        return states, weights

    def expect(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integrate a vectorized function over the measure."""
        states, weights = self.support_arrays()
        return float(np.dot(weights, np.asarray(f(states), dtype=float)))


def _check_comparable(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    if not mu.is_normalized or not nu.is_normalized:
        raise ValueError("tv_distance requires normalized measures")
    if (mu.bin_grid is None) != (nu.bin_grid is None) or (
        mu.bin_grid is not None and mu.bin_grid != nu.bin_grid
    ):
        raise ValueError("tv_distance requires measures built on the same bin grid")


def tv_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Total variation distance in the sup_{|f|<=1} convention, range [0, 2].

    Equals sum_s |mu(s) - nu(s)| over the union support.  Raises if either
    measure is unnormalized or the bin grids differ.
    """
    _check_comparable(mu, nu)
    total = 0.0
    for s in mu.atoms.keys() | nu.atoms.keys():
        total += abs(mu.atoms.get(s, 0.0) - nu.atoms.get(s, 0.0))
    return min(total, 2.0)


def tv_half(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Half-L1 total variation convention, range [0, 1]."""
    return 0.5 * tv_distance(mu, nu)
