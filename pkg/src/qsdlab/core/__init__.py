"""Shared plumbing: states and measures, RNG streams, batch simulation."""

from .measures import BinGrid, EmpiricalMeasure, tv_distance, tv_half
from .rng import RngStream
from .simulate import (
    ProcessModel,
    SimBatchConfig,
    TimeGrid,
    TrajectoryBatch,
    simulate_batch,
    write_csv,
)

__all__ = [
    "BinGrid",
    "EmpiricalMeasure",
    "ProcessModel",
    "RngStream",
    "SimBatchConfig",
    "TimeGrid",
    "TrajectoryBatch",
    "simulate_batch",
    "tv_distance",
    "tv_half",
    "write_csv",
]
