"""Batch driver: reproducibility, absorption bookkeeping, the CSV writer."""

import numpy as np
import pytest

from qsdlab import (
    EmpiricalMeasure,
    RngStream,
    SimBatchConfig,
    TimeGrid,
    delta_measure,
    simulate_batch,
)
from qsdlab.core.simulate import write_csv

GRID = TimeGrid(0.0, 0.25, 9)
CFG = SimBatchConfig(n_trajectories=64, horizon=GRID.t_end, grid=GRID)


def test_time_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.0, 5)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 0.1, 5)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 0.1, 0)
    g = TimeGrid(0.5, 0.25, 3)
    assert np.allclose(g.times, [0.5, 0.75, 1.0])
    assert g.t_end == pytest.approx(1.0)


def test_config_rejects_horizon_before_grid_end():
    with pytest.raises(ValueError):
        SimBatchConfig(n_trajectories=10, horizon=1.0, grid=TimeGrid(0.0, 1.0, 3))
    with pytest.raises(ValueError):
        SimBatchConfig(n_trajectories=0, horizon=2.0, grid=GRID)


def test_batch_bit_reproducible(bd_model):
    a = simulate_batch(bd_model, delta_measure((3, 3)), CFG, RngStream(42))
    b = simulate_batch(bd_model, delta_measure((3, 3)), CFG, RngStream(42))
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.absorption_time, b.absorption_time)


def test_trajectory_independent_of_batch_size(bd_model):
    # trajectory i = child stream i, so a bigger batch extends, not reshuffles
    small_cfg = SimBatchConfig(n_trajectories=16, horizon=GRID.t_end, grid=GRID)
    small = simulate_batch(bd_model, delta_measure((3, 3)), small_cfg, RngStream(42))
    big = simulate_batch(bd_model, delta_measure((3, 3)), CFG, RngStream(42))
    assert np.array_equal(small.states, big.states[:16])
    assert np.array_equal(small.absorbed, big.absorbed[:16])


def test_absorption_is_permanent(bd_model):
    batch = simulate_batch(bd_model, delta_measure((2, 2)), CFG, RngStream(7))
    flags = batch.absorbed
    assert np.all(flags[:, :-1] <= flags[:, 1:])
    # absorbed records sit on the boundary, living records stay positive
    absorbed_states = batch.states[flags]
    if absorbed_states.size:
        assert (absorbed_states == 0).any(axis=1).all()
    alive_states = batch.states[~flags]
    assert (alive_states >= 1).all()


def test_absorption_time_consistent_with_flags(bd_model):
    batch = simulate_batch(bd_model, delta_measure((2, 2)), CFG, RngStream(8))
    times = GRID.times
    for i in range(batch.n_trajectories):
        tau = batch.absorption_time[i]
        if np.isfinite(tau):
            assert np.array_equal(batch.absorbed[i], times >= tau)
        else:
            assert not batch.absorbed[i, : len(times)].any() or batch.guard_tripped[i]


def test_initial_measure_mixture_uses_both_states(bd_model):
    init = EmpiricalMeasure({(1, 1): 0.5, (8, 8): 0.5})
    batch = simulate_batch(bd_model, init, CFG, RngStream(3))
    starts = {tuple(s) for s in batch.states[:, 0, :]}
    assert (1, 1) in starts and (8, 8) in starts


def test_absorbed_initial_state_rejected(bd_model):
    with pytest.raises(ValueError):
        simulate_batch(bd_model, delta_measure((0, 3)), CFG, RngStream(1))


def test_dimension_mismatch_rejected(bd_model):
    with pytest.raises(ValueError):
        simulate_batch(bd_model, delta_measure((2, 2, 2)), CFG, RngStream(1))


def test_guard_trips_instead_of_truncating(bd_model):
    cfg = SimBatchConfig(n_trajectories=8, horizon=GRID.t_end, grid=GRID, max_steps=3)
    batch = simulate_batch(bd_model, delta_measure((20, 20)), cfg, RngStream(5))
    assert batch.guard_tripped.all()
    assert batch.survivors(GRID.n_points - 1) == 0


def test_write_csv_round_trips_floats(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [(1, 0.1), (2, 1.0 / 3.0)])
    lines = path.read_text().splitlines()
    assert lines[0] == "a,b"
    assert float(lines[1].split(",")[1]) == 0.1
    assert float(lines[2].split(",")[1]) == 1.0 / 3.0


def test_batch_csv_and_sidecar(tmp_path, bd_model):
    cfg = SimBatchConfig(n_trajectories=4, horizon=GRID.t_end, grid=GRID)
    batch = simulate_batch(bd_model, delta_measure((2, 2)), cfg, RngStream(2))
    batch.to_csv(tmp_path / "batch.csv")
    batch.write_sidecar(tmp_path / "batch.json")
    lines = (tmp_path / "batch.csv").read_text().splitlines()
    assert lines[0] == "trajectory_id,grid_index,time,coord_0,coord_1,absorbed_flag"
    assert len(lines) == 1 + 4 * GRID.n_points
    import json

    sidecar = json.loads((tmp_path / "batch.json").read_text())
    assert sidecar["seed"] == 2
    assert sidecar["n_trajectories"] == 4
