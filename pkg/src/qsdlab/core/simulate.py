"""Batch simulation of absorbed Markov processes.

A ProcessModel knows how to advance one trajectory from an initial state and
record it on a fixed time grid.  simulate_batch draws initial states from an
empirical measure and runs one child RNG stream per trajectory, so a batch is
bit-reproducible for a fixed (model, init, config, stream) regardless of
batch size or scheduling.  Absorption is permanent: once a recorded state is
flagged absorbed every later record of that trajectory is absorbed too.
Guard trips (event or step budget exhausted) flag the trajectory instead of
silently truncating it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from .measures import EmpiricalMeasure
from .rng import RngStream

__all__ = [
    "TimeGrid",
    "SimBatchConfig",
    "TrajectoryBatch",
    "ProcessModel",
    "simulate_batch",
    "write_csv",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform recording grid t0, t0 + dt, ..., t0 + (n_points - 1) dt."""

    t0: float
    dt: float
    n_points: int

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.t0 < 0.0:
            raise ValueError("t0 must be nonnegative")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_points)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n_points - 1)


@dataclass(frozen=True)
class SimBatchConfig:
    """Batch size, horizon, recording grid, and per-trajectory guard."""

    n_trajectories: int
    horizon: float
    grid: TimeGrid
    max_steps: int = 10**7  # guard on events (jump chains) or steps (schemes)

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.horizon < self.grid.t_end:
            raise ValueError(
                f"horizon {self.horizon} shorter than last grid instant {self.grid.t_end}"
            )


@runtime_checkable
class ProcessModel(Protocol):
    """Minimal simulation interface shared by the jump chain and the diffusion."""

    name: str
    dimension: int
    state_dtype: np.dtype

    def is_absorbed(self, states: np.ndarray) -> np.ndarray:
        """Vectorized membership test for the absorbing set."""

    def simulate_one(
        self,
        state0: np.ndarray,
        times: np.ndarray,
        horizon: float,
        max_steps: int,
        gen: np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray, float, bool]:
        """Advance one trajectory; return (path, absorbed_flags, tau, guard_tripped).

        path has shape (len(times), d); absorbed_flags marks records at or
        after absorption; tau is the absorption time (inf if not observed
        before the horizon or guard).
        """


@dataclass(frozen=True)
class TrajectoryBatch:
    """Recorded batch: states on the grid plus absorption bookkeeping."""

    grid: TimeGrid
    states: np.ndarray  # (n_traj, n_points, d)
    absorbed: np.ndarray  # (n_traj, n_points) bool
    absorption_time: np.ndarray  # (n_traj,) float, inf if censored
    guard_tripped: np.ndarray  # (n_traj,) bool
    stream: RngStream
    model_name: str
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_trajectories(self) -> int:
        return self.states.shape[0]

    def survivor_states(self, k: int) -> np.ndarray:
        """States of trajectories alive at grid index k."""
        alive = ~self.absorbed[:, k] & ~self.guard_tripped
        return self.states[alive, k, :]

    def survivors(self, k: int) -> int:
        return int((~self.absorbed[:, k] & ~self.guard_tripped).sum())

    def to_rows(self):
        """Yield CSV rows (trajectory_id, grid_index, time, coord_*, absorbed_flag)."""
        times = self.grid.times
        d = self.states.shape[2]
        for i in range(self.n_trajectories):
            for k in range(self.grid.n_points):
                yield (
                    [i, k, times[k]]
                    + [self.states[i, k, j] for j in range(d)]
                    + [int(self.absorbed[i, k])]
                )

    def to_csv(self, path) -> None:
        d = self.states.shape[2]
        header = ["trajectory_id", "grid_index", "time"]
        header += [f"coord_{j}" for j in range(d)]
        header += ["absorbed_flag"]
        write_csv(path, header, self.to_rows())

    def write_sidecar(self, path) -> None:
        """JSON sidecar recording the configuration and seed of the batch."""
        payload = {
            "model": self.model_name,
            "grid": {"t0": self.grid.t0, "dt": self.grid.dt, "n_points": self.grid.n_points},
            "n_trajectories": self.n_trajectories,
            "seed": self.stream.seed,
            "stream_path": list(self.stream.path),
            "guard_tripped": int(self.guard_tripped.sum()),
            "absorbed_by_horizon": int(np.isfinite(self.absorption_time).sum()),
            "meta": self.meta,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    """Write a table with deterministic cell formatting (repr round-trip)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])


def draw_initial_states(
    init: EmpiricalMeasure, n: int, stream: RngStream, dtype=None
) -> np.ndarray:
    """Draw n initial states, one per child stream, from a normalized measure."""
    if not init.is_normalized:
        raise ValueError("initial measure must be normalized")
    states, weights = init.support_arrays()
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    out = np.empty((n, states.shape[1]), dtype=dtype or states.dtype)
    for i in range(n):
        u = stream.child(i).generator().random()
        out[i] = states[np.searchsorted(cum, u, side="left")]
    return out


def simulate_batch(
    model: ProcessModel,
    init: EmpiricalMeasure,
    cfg: SimBatchConfig,
    stream: RngStream,
) -> TrajectoryBatch:
    """Simulate a batch of independent trajectories of ``model``.

    Trajectory i draws its initial state and all subsequent randomness from
    ``stream.child(i)``, so any trajectory is reproducible in isolation.
    Absorbed initial states are rejected.

    Args:
        model: process implementing the ProcessModel protocol.
        init: normalized initial measure; support must avoid the absorbing set.
        cfg: batch size, horizon, recording grid, guard.
        stream: base stream of the batch.

    Returns:
        TrajectoryBatch with states recorded at every grid instant.
    """
    support, weights = init.support_arrays()
    if not init.is_normalized:
        raise ValueError("initial measure must be normalized")
    if support.shape[1] != model.dimension:
        raise ValueError(
            f"initial states have dimension {support.shape[1]}, model has {model.dimension}"
        )
    if bool(np.any(model.is_absorbed(support))):
        raise ValueError("initial measure puts mass on the absorbing set")

    times = cfg.grid.times
    n = cfg.n_trajectories
    d = model.dimension
    states = np.empty((n, cfg.grid.n_points, d), dtype=model.state_dtype)
    absorbed = np.empty((n, cfg.grid.n_points), dtype=bool)
    tau = np.empty(n, dtype=float)
    guard = np.empty(n, dtype=bool)

    support = support.astype(model.state_dtype)
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    for i in range(n):
        # the first draw of the child stream picks the initial state, the
        # rest drive the trajectory; batch size never enters
        gen = stream.child(i).generator()
        x0 = support[np.searchsorted(cum, gen.random(), side="left")]
        path, flags, t_abs, tripped = model.simulate_one(
            x0, times, cfg.horizon, cfg.max_steps, gen
        )
        states[i] = path
        absorbed[i] = flags
        tau[i] = t_abs
        guard[i] = tripped

    return TrajectoryBatch(
        grid=cfg.grid,
        states=states,
        absorbed=absorbed,
        absorption_time=tau,
        guard_tripped=guard,
        stream=stream,
        model_name=model.name,
    )
