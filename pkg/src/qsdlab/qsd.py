"""Quasi-stationary distribution estimators and convergence diagnostics.

Three independent routes to the same object: the truncated-generator
eigenvector oracle (exact up to truncation), conditioned Monte Carlo
(normalized law of survivors on a time grid), and a Fleming-Viot particle
system (absorbed particles jump onto a uniformly chosen survivor).  On a
common reference model the three must agree; the cross-checks live in the
certificate layer and the acceptance suite, this module only produces the
estimates together with their own error diagnostics.

Decay-rate fits run on (t, log value) with an auto-selected window: start
at the first time the curve has dropped to 0.8 of its maximum (skips the
flat early transient), stop at the last time it still clears ten times the
noise floor (cuts the sampling-noise plateau).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import chi2 as _chi2
from scipy.stats import t as _student_t

from .core.measures import BinGrid, EmpiricalMeasure
from .core.rng import RngStream
from .core.simulate import SimBatchConfig, TimeGrid, simulate_batch, write_csv
from .stats import ols_line
from .uniformization import (
    BoxTruncation,
    auto_box_size,
    build_truncation,
    principal_left_eigenvector,
    semigroup_left,
)

__all__ = [
    "QSDEstimate",
    "DecayFit",
    "ConditionedCurve",
    "ConvergenceReport",
    "EtaProfile",
    "delta_measure",
    "qsd_eigen_oracle",
    "conditioned_mc",
    "fleming_viot",
    "convergence_report",
    "fit_decay_rate",
    "eta_profile",
    "measure_to_vector",
    "vector_to_measure",
    "fixed_point_gaps",
]

_METHODS = ("eigen_oracle", "conditioned_mc", "fleming_viot")


def delta_measure(state) -> EmpiricalMeasure:
    """Point mass at one state."""
    return EmpiricalMeasure.from_states(np.atleast_2d(np.asarray(state)))


def _as_measure(init) -> EmpiricalMeasure:
    if isinstance(init, EmpiricalMeasure):
        return init if init.is_normalized else init.normalized()
    return delta_measure(init)


# ---------------------------------------------------------------------------
# estimate containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QSDEstimate:
    """A quasi-stationary distribution estimate with its decay rate.

    ``lambda0`` is the absorption rate under the estimated QSD and
    ``lambda0_ci`` an interval around it whose meaning depends on the
    method: eigenvector residual for the oracle, an exact Poisson interval
    for the Fleming-Viot event rate, a regression interval for fits.
    """

    measure: EmpiricalMeasure
    method: str
    lambda0: float
    lambda0_ci: tuple[float, float]
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {_METHODS}")
        if not self.measure.is_normalized:
            raise ValueError("QSD estimate must carry a normalized measure")
        lo, hi = (float(self.lambda0_ci[0]), float(self.lambda0_ci[1]))
        if not (0.0 <= lo <= self.lambda0 <= hi):
            raise ValueError(f"lambda0 CI ({lo}, {hi}) must be nonnegative and bracket lambda0")
        object.__setattr__(self, "lambda0", float(self.lambda0))
        object.__setattr__(self, "lambda0_ci", (lo, hi))

    def atom_table(self) -> tuple[list[str], list[tuple]]:
        """Header and rows of the atom listing (bin centers for binned measures)."""
        states, weights = self.measure.support_arrays()
        d = states.shape[1]
        header = [f"coord_{k}" for k in range(d)] + ["weight"]
        grid = self.measure.bin_grid
        if grid is not None:
            centers = [
                [0.5 * (e[i] + e[i + 1]) for i in range(len(e) - 1)] for e in grid.edges
            ]
            rows = [
                tuple(centers[k][int(s[k])] for k in range(d)) + (float(w),)
                for s, w in zip(states, weights)
            ]
        else:
            rows = [tuple(s) + (float(w),) for s, w in zip(states, weights)]
        return header, rows

    def to_csv(self, path) -> None:
        header, rows = self.atom_table()
        write_csv(path, header, rows)

    def to_json_dict(self) -> dict:
        out = {
            "method": self.method,
            "lambda0": self.lambda0,
            "lambda0_ci": list(self.lambda0_ci),
            "n_atoms": len(self.measure.atoms),
            "diagnostics": dict(self.diagnostics),
        }
        if self.measure.bin_grid is not None:
            out["bin_edges"] = [list(e) for e in self.measure.bin_grid.edges]
        return out

    def write_json(self, path) -> None:
        import json

        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential fit value ~ C exp(-rate t) on a window."""

    rate: float
    C: float
    r_squared: float
    window: tuple[float, float]
    rate_ci: tuple[float, float]
    slope_se: float
    n_points: int

    def to_json_dict(self) -> dict:
        return {
            "rate": self.rate,
            "C": self.C,
            "r_squared": self.r_squared,
            "window": list(self.window),
            "rate_ci": list(self.rate_ci),
            "slope_se": self.slope_se,
            "n_points": self.n_points,
        }


# ---------------------------------------------------------------------------
# eigenvector oracle
# ---------------------------------------------------------------------------


def qsd_eigen_oracle(
    model,
    box: int | None = None,
    mass_tol: float = 1e-6,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> QSDEstimate:
    """QSD and decay rate from the principal left eigenvector on a box.

    ``box`` is the per-axis truncation size; None grows it until the outer
    shell carries less than ``mass_tol`` of the eigenvector mass.  The l1
    eigen-residual doubles as the reported lambda0 interval.
    """
    if box is None:
        box = auto_box_size(model, mass_tol=mass_tol, eigen_tol=tol)
    tr = build_truncation(model, box)
    res = principal_left_eigenvector(tr, tol=tol, max_iter=max_iter)
    measure = EmpiricalMeasure.from_states(tr.states, weights=res.vector).normalized()
    lam = float(res.decay_rate)
    ci = (max(lam - res.residual_l1, 0.0), lam + res.residual_l1)
    return QSDEstimate(
        measure=measure,
        method="eigen_oracle",
        lambda0=lam,
        lambda0_ci=ci,
        diagnostics={
            "box": int(box),
            "n_states": tr.n_states,
            "residual_l1": res.residual_l1,
            "iterations": res.iterations,
        },
    )


def measure_to_vector(measure: EmpiricalMeasure, tr: BoxTruncation) -> np.ndarray:
    """Probability vector of ``measure`` over ``tr.states`` (atoms must fit)."""
    vec = np.zeros(tr.n_states)
    for state, w in measure.atoms.items():
        vec[tr.index_of(np.asarray(state))] = w
    total = vec.sum()
    if total <= 0.0:
        raise ValueError("measure has no mass inside the truncation")
    return vec / total


def vector_to_measure(vec: np.ndarray, tr: BoxTruncation) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_states(tr.states, weights=np.asarray(vec, dtype=float))


def fixed_point_gaps(
    tr: BoxTruncation,
    measure: EmpiricalMeasure,
    times: Sequence[float] = (0.5, 1.0, 2.0),
    semigroup_tol: float = 1e-13,
) -> dict[float, float]:
    """TV gap between a measure and its reconditioned semigroup image.

    Propagates through the exact truncated sub-Markov semigroup for each
    time, renormalizes over the surviving mass, and reports the full-l1
    distance to the input.  Zero (up to truncation and quadrature error)
    exactly at the QSD.
    """
    v = measure_to_vector(measure, tr)
    gaps: dict[float, float] = {}
    for t in times:
        w = semigroup_left(tr, v, float(t), tol=semigroup_tol)
        alive = w.sum()
        if alive <= 0.0:
            raise ValueError(f"semigroup image at t={t} has no surviving mass")
        gaps[float(t)] = float(np.abs(w / alive - v).sum())
    return gaps


# ---------------------------------------------------------------------------
# conditioned Monte Carlo
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionedCurve:
    """Per-time normalized laws of survivors from one trajectory batch.

    ``measures[k]`` is None once survivors hit zero (``truncated_at`` holds
    the first such index); entries with fewer than the reliability cutoff
    are flagged in ``unreliable`` but still returned.  Indexing the curve
    indexes the measure sequence.
    """

    times: np.ndarray
    measures: tuple
    survivors: np.ndarray
    n_trajectories: int
    unreliable: np.ndarray
    truncated_at: int | None

    def __len__(self) -> int:
        return len(self.measures)

    def __getitem__(self, k):
        return self.measures[k]

    def __iter__(self):
        return iter(self.measures)

    def largest_reliable_index(self) -> int | None:
        ok = np.nonzero(~self.unreliable)[0]
        return int(ok[-1]) if ok.size else None


def conditioned_mc(
    model,
    init,
    t_grid: TimeGrid,
    n_traj: int,
    stream: RngStream,
    bin_grid: BinGrid | None = None,
    bins_per_axis: int = 40,
    max_steps: int = 10**7,
    min_survivors: int = 50,
    return_batch: bool = False,
):
    """Normalized empirical law of survivors at each grid time.

    Continuous-state models are binned; a single grid pooled over the whole
    curve is built when ``bin_grid`` is None, so the returned measures are
    TV-comparable across times.  Discrete models keep raw integer atoms.

    Args:
        init: EmpiricalMeasure or a single state (treated as a point mass).
        return_batch: also return the underlying TrajectoryBatch.
    """
    if n_traj < 1000:
        raise ValueError("conditioned_mc needs n_traj >= 1000 for usable survivor laws")
    init_m = _as_measure(init)
    cfg = SimBatchConfig(
        n_trajectories=int(n_traj), horizon=t_grid.t_end, grid=t_grid, max_steps=max_steps
    )
    batch = simulate_batch(model, init_m, cfg, stream)
    discrete = np.issubdtype(np.dtype(model.state_dtype), np.integer)
    if not discrete and bin_grid is None:
        pooled = [batch.survivor_states(k) for k in range(t_grid.n_points)]
        pooled = [s for s in pooled if s.shape[0] > 0]
        bin_grid = BinGrid.from_samples(pooled, bins_per_axis=bins_per_axis)

    measures: list[EmpiricalMeasure | None] = []
    survivors = np.zeros(t_grid.n_points, dtype=np.int64)
    truncated_at: int | None = None
    for k in range(t_grid.n_points):
        alive = batch.survivors(k)
        survivors[k] = alive
        if truncated_at is not None or alive == 0:
            if truncated_at is None:
                truncated_at = k
            measures.append(None)
            continue
        states = batch.survivor_states(k)
        m = EmpiricalMeasure.from_states(states, bin_grid=None if discrete else bin_grid)
        measures.append(m.normalized())
    curve = ConditionedCurve(
        times=t_grid.times,
        measures=tuple(measures),
        survivors=survivors,
        n_trajectories=int(n_traj),
        unreliable=survivors < int(min_survivors),
        truncated_at=truncated_at,
    )
    return (curve, batch) if return_batch else curve


# ---------------------------------------------------------------------------
# Fleming-Viot particle system
# ---------------------------------------------------------------------------


def fleming_viot(
    model,
    init,
    n_particles: int,
    horizon: float,
    stream: RngStream,
    epoch_len: float = 0.05,
    bin_grid: BinGrid | None = None,
    bins_per_axis: int = 40,
    max_steps: int = 10**7,
) -> QSDEstimate:
    """Fleming-Viot estimate: absorbed particles jump onto a survivor.

    Particles advance in synchronized epochs; resampling targets come from
    the epoch-start snapshot, so the result is independent of intra-epoch
    scheduling.  The measure time-averages the epoch-end configurations of
    the second half of the horizon (first half is burn-in), and lambda0 is
    the post-burn-in resampling rate per particle with an exact Poisson
    interval.
    """
    if n_particles < 100:
        raise ValueError("fleming_viot needs n_particles >= 100")
    if epoch_len <= 0.0 or horizon <= 0.0:
        raise ValueError("horizon and epoch_len must be positive")
    init_m = _as_measure(init)
    support, weights = init_m.support_arrays()
    bad = np.nonzero(model.is_absorbed(support))[0]
    if bad.size:
        raise ValueError(f"initial measure puts mass on the absorbed state {tuple(support[bad[0]])}")
    cum = np.cumsum(weights)
    cum[-1] = 1.0

    n_epochs = int(math.ceil(horizon / epoch_len))
    burn_in = n_epochs // 2
    dtype = np.dtype(model.state_dtype)
    discrete = np.issubdtype(dtype, np.integer)

    # one persistent generator per particle; its first draw picks the start
    gens = [stream.child(i).generator() for i in range(n_particles)]
    states = np.empty((n_particles, support.shape[1]), dtype=dtype)
    for i in range(n_particles):
        states[i] = support[np.searchsorted(cum, gens[i].random(), side="left")]

    events = 0
    kept: list[np.ndarray] = []
    for e in range(n_epochs):
        snapshot = states.copy()
        for i in range(n_particles):
            new_state, count, guard = model.fv_epoch(
                states[i], epoch_len, snapshot, i, max_steps, gens[i]
            )
            if guard:
                raise RuntimeError(
                    f"particle {i} exhausted max_steps={max_steps} inside epoch {e}; "
                    "raise the budget or shorten epoch_len"
                )
            states[i] = new_state
            if e >= burn_in:
                events += int(count)
        if e >= burn_in:
            if bool(np.any(model.is_absorbed(states))):
                raise RuntimeError(
                    "Fleming-Viot epoch ended on an absorbed particle; "
                    "restart with smaller dt"
                )
            kept.append(states.copy())

    window_time = (n_epochs - burn_in) * epoch_len
    lam = events / (n_particles * window_time)
    lo = 0.0 if events == 0 else 0.5 * _chi2.ppf(0.025, 2 * events)
    hi = 0.5 * _chi2.ppf(0.975, 2 * events + 2)
    scale = n_particles * window_time

    stacked = np.concatenate(kept, axis=0)
    if discrete:
        measure = EmpiricalMeasure.from_states(stacked)
    else:
        grid = bin_grid or BinGrid.from_samples([stacked], bins_per_axis=bins_per_axis)
        measure = EmpiricalMeasure.from_states(stacked, bin_grid=grid)
    # renormalize: 1/n weights accumulated over a long sample drift past
    # the mass tolerance, the per-atom division restores it exactly
    measure = measure.normalized()
    return QSDEstimate(
        measure=measure,
        method="fleming_viot",
        lambda0=float(lam),
        lambda0_ci=(float(lo / scale), float(hi / scale)),
        diagnostics={
            "n_particles": int(n_particles),
            "epoch_len": float(epoch_len),
            "n_epochs": n_epochs,
            "burn_in_epochs": burn_in,
            "effective_horizon": n_epochs * epoch_len,
            "resampling_events": int(events),
            "window_time": float(window_time),
        },
    )


# ---------------------------------------------------------------------------
# decay-rate fitting
# ---------------------------------------------------------------------------


def fit_decay_rate(
    times,
    values,
    noise_floor: float | None = None,
    window: tuple[float, float] | None = None,
) -> DecayFit:
    """Fit value ~ C exp(-rate t) by least squares on the log curve.

    The auto-selected window runs from the first time the curve is at or
    below 0.8 of its maximum to the last time it is at or above ten times
    the noise floor (default: the smallest positive value).  An explicit
    ``window`` overrides the selection, for comparing fits of replicated
    curves over a common range.  Raises when fewer than five positive
    points survive the window.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1:
        raise ValueError("times and values must be equal-length 1-d arrays")
    pos = v > 0.0
    if not pos.any():
        raise ValueError("insufficient decay resolved: curve has no positive values")
    if noise_floor is None:
        noise_floor = float(v[pos].min())
    if noise_floor <= 0.0:
        raise ValueError("noise_floor must be positive")
    if window is not None:
        inside = np.nonzero((t >= window[0]) & (t <= window[1]))[0]
        if inside.size == 0:
            raise ValueError("insufficient decay resolved: window misses the grid")
        i0, i1 = int(inside[0]), int(inside[-1])
    else:
        vmax = float(v[pos].max())
        start_hits = np.nonzero(v <= 0.8 * vmax)[0]
        stop_hits = np.nonzero(v >= 10.0 * noise_floor)[0]
        if start_hits.size == 0 or stop_hits.size == 0 or stop_hits[-1] < start_hits[0]:
            raise ValueError("insufficient decay resolved: empty fit window")
        i0, i1 = int(start_hits[0]), int(stop_hits[-1])
    mask = np.zeros_like(pos)
    mask[i0 : i1 + 1] = True
    mask &= pos
    n = int(mask.sum())
    if n < 5:
        raise ValueError(f"insufficient decay resolved: {n} usable points in the window")
    slope, intercept, slope_se, r2 = ols_line(t[mask], np.log(v[mask]))
    tcrit = float(_student_t.ppf(0.975, n - 2))
    rate = -slope
    return DecayFit(
        rate=float(rate),
        C=float(math.exp(intercept)),
        r_squared=float(r2),
        window=(float(t[i0]), float(t[i1])),
        rate_ci=(float(rate - tcrit * slope_se), float(rate + tcrit * slope_se)),
        slope_se=float(slope_se),
        n_points=n,
    )


# ---------------------------------------------------------------------------
# two-run convergence report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """TV decay between two conditioned evolutions plus fitted rates.

    The reference is the second initial condition's own conditional law,
    not a QSD estimate, so the report does not assume any estimator is
    correct.  ``survivors`` rows hold both runs; the CSV reports the
    smaller of the two as the binding sample size.  ``survival_fit`` is the
    exponential fit to the first run's survival curve (its rate estimates
    lambda0).
    """

    times: np.ndarray
    tv: np.ndarray
    tv_ci: np.ndarray
    survivors_a: np.ndarray
    survivors_b: np.ndarray
    fit: DecayFit | None
    survival_fit: DecayFit | None
    n_trajectories: int
    truncated: bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if np.any(self.tv < -1e-12) or np.any(self.tv > 2.0 + 1e-12):
            raise ValueError("tv curve leaves [0, 2]")

    @property
    def lambda0(self) -> float | None:
        return self.survival_fit.rate if self.survival_fit is not None else None

    def table(self) -> tuple[list[str], list[tuple]]:
        """Header and rows of the per-time curve listing."""
        header = ["t", "tv", "survivors", "ci_lo", "ci_hi", "tv_half"]
        rows = [
            (
                float(self.times[k]),
                float(self.tv[k]),
                int(min(self.survivors_a[k], self.survivors_b[k])),
                float(self.tv_ci[k, 0]),
                float(self.tv_ci[k, 1]),
                0.5 * float(self.tv[k]),
            )
            for k in range(len(self.times))
        ]
        return header, rows

    def survival_table(self) -> tuple[list[str], list[tuple]]:
        """Header and rows of the per-time survivor counts for both laws."""
        header = ["t", "survivors_a", "survivors_b"]
        rows = [
            (float(self.times[k]), int(self.survivors_a[k]), int(self.survivors_b[k]))
            for k in range(len(self.times))
        ]
        return header, rows

    def to_csv(self, path) -> None:
        header, rows = self.table()
        write_csv(path, header, rows)

    def to_json_dict(self) -> dict:
        out: dict = {
            "rate": None,
            "C": None,
            "r2": None,
            "window": None,
            "lambda0": self.lambda0,
            "n_trajectories": self.n_trajectories,
            "truncated": self.truncated,
            "meta": dict(self.meta),
        }
        if self.fit is not None:
            out.update(
                rate=self.fit.rate,
                C=self.fit.C,
                r2=self.fit.r_squared,
                window=list(self.fit.window),
                rate_ci=list(self.fit.rate_ci),
            )
        if self.survival_fit is not None:
            out["survival_fit"] = self.survival_fit.to_json_dict()
        return out

    def write_json(self, path) -> None:
        import json

        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _boot_rate_ci(times, boot_curves, window) -> list[float] | None:
    rates = []
    lo, hi = window
    for curve in boot_curves:
        mask = (times >= lo) & (times <= hi) & np.isfinite(curve) & (curve > 0.0)
        if int(mask.sum()) >= 3:
            slope, _, _, _ = ols_line(times[mask], np.log(curve[mask]))
            rates.append(-slope)
    if len(rates) < max(20, boot_curves.shape[0] // 2):
        return None
    return [float(np.quantile(rates, 0.025)), float(np.quantile(rates, 0.975))]


def _atom_ids(keys: np.ndarray, table: dict) -> np.ndarray:
    ids = np.empty(keys.shape[0], dtype=np.int64)
    for j, row in enumerate(keys):
        key = tuple(int(v) if float(v).is_integer() else float(v) for v in row)
        ids[j] = table.setdefault(key, len(table))
    return ids


def _counts(ids: np.ndarray, ncols: int) -> np.ndarray:
    return np.bincount(ids, minlength=ncols).astype(float)


def convergence_report(
    model,
    init_a,
    init_b,
    t_grid: TimeGrid,
    n_traj: int,
    stream: RngStream,
    bins_per_axis: int = 40,
    n_boot: int = 150,
    max_steps: int = 10**7,
    noise_floor: float | None = None,
    survival_floor_counts: int = 50,
) -> ConvergenceReport:
    """TV distance curve between two conditioned evolutions, with CIs.

    Runs two independent batches (children 0 and 1 of ``stream``) and bins
    continuous states on a shared per-time grid.  Uncertainty comes from a
    trajectory-level bootstrap (child 2): each replicate resamples whole
    trajectories once and rebuilds the full curve, so the per-time CIs and
    the refitted rates inherit the correlation between grid times.  The
    curve stops at the first grid time either run has zero survivors.
    """
    cfg = SimBatchConfig(
        n_trajectories=int(n_traj), horizon=t_grid.t_end, grid=t_grid, max_steps=max_steps
    )
    batch_a = simulate_batch(model, _as_measure(init_a), cfg, stream.child(0))
    batch_b = simulate_batch(model, _as_measure(init_b), cfg, stream.child(1))
    boot_gen = stream.child(2).generator()
    discrete = np.issubdtype(np.dtype(model.state_dtype), np.integer)

    T = t_grid.n_points
    tv = np.zeros(T)
    noise = np.zeros(T)
    surv_a = np.array([batch_a.survivors(k) for k in range(T)], dtype=np.int64)
    surv_b = np.array([batch_b.survivors(k) for k in range(T)], dtype=np.int64)
    alive_a = ~batch_a.absorbed & ~batch_a.guard_tripped[:, None]
    alive_b = ~batch_b.absorbed & ~batch_b.guard_tripped[:, None]
    # per-trajectory class membership at every time, -1 when not surviving
    id_a = np.full((n_traj, T), -1, dtype=np.int64)
    id_b = np.full((n_traj, T), -1, dtype=np.int64)
    ncols = np.zeros(T, dtype=np.int64)
    L = T
    for k in range(T):
        if surv_a[k] == 0 or surv_b[k] == 0:
            L = k
            break
        sa = batch_a.states[alive_a[:, k], k]
        sb = batch_b.states[alive_b[:, k], k]
        grid = None
        if not discrete:
            grid = BinGrid.from_samples([sa, sb], bins_per_axis=bins_per_axis)
        table: dict = {}
        ids_a = _atom_ids(grid.assign(sa) if grid is not None else sa, table)
        ids_b = _atom_ids(grid.assign(sb) if grid is not None else sb, table)
        id_a[alive_a[:, k], k] = ids_a
        id_b[alive_b[:, k], k] = ids_b
        ncols[k] = len(table)
        ca = _counts(ids_a, ncols[k])
        cb = _counts(ids_b, ncols[k])
        tv[k] = min(float(np.abs(ca / surv_a[k] - cb / surv_b[k]).sum()), 2.0)
        # expected TV between two same-law samples of these sizes (folded
        # normal mean per atom): the statistic bottoms out here, not at 0
        p_pool = (ca + cb) / (surv_a[k] + surv_b[k])
        var = p_pool * (1.0 - p_pool) * (1.0 / surv_a[k] + 1.0 / surv_b[k])
        noise[k] = min(float(math.sqrt(2.0 / math.pi) * np.sqrt(var).sum()), 2.0)

    boot_tv = np.full((n_boot, L), np.nan)
    boot_surv_a = np.zeros((n_boot, L))
    for b in range(n_boot):
        ra = boot_gen.integers(0, n_traj, n_traj)
        rb = boot_gen.integers(0, n_traj, n_traj)
        for k in range(L):
            va = id_a[ra, k]
            vb = id_b[rb, k]
            va = va[va >= 0]
            vb = vb[vb >= 0]
            boot_surv_a[b, k] = va.size / n_traj
            if va.size == 0 or vb.size == 0:
                continue
            pa = np.bincount(va, minlength=ncols[k]) / va.size
            pb = np.bincount(vb, minlength=ncols[k]) / vb.size
            boot_tv[b, k] = min(float(np.abs(pa - pb).sum()), 2.0)
    with np.errstate(invalid="ignore"):
        tv_ci = np.stack(
            [np.nanquantile(boot_tv, 0.025, axis=0), np.nanquantile(boot_tv, 0.975, axis=0)],
            axis=1,
        )
    tv_ci = np.nan_to_num(tv_ci, nan=0.0)

    times = t_grid.times[:L]
    tv = tv[:L]
    meta: dict = {
        "model": getattr(model, "name", "?"),
        "bins_per_axis": None if discrete else bins_per_axis,
        "predicted_noise": [float(x) for x in np.round(noise[:L], 6)],
    }
    fit = None
    if noise_floor is None:
        # stop the fit at the last point still clearing three times the
        # predicted same-law noise (observed TV inflates by <= 5.4% there)
        # and let the window formula land on that point
        ok = np.nonzero((tv[:L] > 0.0) & (tv[:L] >= 3.0 * noise[:L]))[0]
        if ok.size:
            noise_floor = max(float(tv[ok[-1]]) / 10.0, 1e-12)
    try:
        fit = fit_decay_rate(times, tv, noise_floor=noise_floor)
    except ValueError as err:
        meta["tv_fit_error"] = str(err)
    survival_fit = None
    try:
        survival_fit = fit_decay_rate(
            times,
            surv_a[:L] / n_traj,
            noise_floor=survival_floor_counts / n_traj,
        )
    except ValueError as err:
        meta["survival_fit_error"] = str(err)

    # bootstrap CIs for the fitted rates: refit every resampled curve on
    # the headline window; quantiles inherit the cross-time correlation
    # that the in-window regression CI cannot see
    if fit is not None:
        ci = _boot_rate_ci(times, boot_tv, fit.window)
        if ci is not None:
            meta["rate_ci_boot"] = ci
    if survival_fit is not None:
        ci = _boot_rate_ci(times, boot_surv_a, survival_fit.window)
        if ci is not None:
            meta["survival_rate_ci_boot"] = ci
    unreliable = np.nonzero((surv_a[:L] < 50) | (surv_b[:L] < 50))[0]
    if unreliable.size:
        meta["unreliable_from_t"] = float(times[unreliable[0]])
    return ConvergenceReport(
        times=times,
        tv=tv,
        tv_ci=tv_ci,
        survivors_a=surv_a[:L],
        survivors_b=surv_b[:L],
        fit=fit,
        survival_fit=survival_fit,
        n_trajectories=int(n_traj),
        truncated=L < T,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# eta profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EtaProfile:
    """Rescaled survival curves exp(lambda0 t) P_x(t < absorption).

    ``plateau`` averages the last third of each curve; it converges to the
    principal right eigenfunction scaled by 1/nu(eta) (nu the QSD).
    ``drift`` is the relative change between the two halves of that last
    third, a stabilization diagnostic.
    """

    states: np.ndarray
    times: np.ndarray
    curves: np.ndarray
    plateau: np.ndarray
    drift: np.ndarray
    lambda0: float
    lambda0_ci: tuple[float, float] | None
    notes: tuple[str, ...]


def eta_profile(
    model,
    states,
    t_grid,
    mc_budget: int,
    stream: RngStream,
    lambda0: float,
    lambda0_ci: tuple[float, float] | None = None,
    max_steps: int = 10**7,
) -> EtaProfile:
    """Monte Carlo profile of the right eigenfunction via rescaled survival.

    State i uses ``stream.child(i)``; an absorbed starting state yields the
    zero curve without sampling.  Censored trajectories (no absorption by
    the horizon) count as surviving at every grid time.
    """
    states = np.atleast_2d(np.asarray(states))
    times = np.asarray(getattr(t_grid, "times", t_grid), dtype=float)
    if times.ndim != 1 or times.size < 3:
        raise ValueError("need a 1-d time grid with at least 3 points")
    if lambda0 < 0.0:
        raise ValueError("lambda0 must be nonnegative")
    horizon = float(times.max())
    m = states.shape[0]
    curves = np.zeros((m, times.size))
    factor = np.exp(lambda0 * times)
    for i in range(m):
        x = states[i]
        if bool(np.any(model.is_absorbed(x))):
            continue
        taus = model.sample_absorption_times(x, int(mc_budget), horizon, max_steps, stream.child(i))
        surv = (taus[None, :] > times[:, None]).mean(axis=1)
        curves[i] = factor * surv

    third = max(times.size // 3, 2)
    tail = curves[:, -third:]
    plateau = tail.mean(axis=1)
    half = third // 2
    first = tail[:, :half].mean(axis=1)
    second = tail[:, -half:].mean(axis=1)
    denom = np.maximum(np.abs(plateau), 1e-300)
    drift = (second - first) / denom

    notes: list[str] = []
    if lambda0_ci is not None:
        width = float(lambda0_ci[1] - lambda0_ci[0])
        spread = math.exp(width * horizon)
        if spread > 1.5:
            notes.append(
                f"lambda0 CI width {width:.3g} scales the horizon factor by {spread:.3g}; "
                "plateau values are uncertain to that factor"
            )
    return EtaProfile(
        states=states,
        times=times,
        curves=curves,
        plateau=plateau,
        drift=drift,
        lambda0=float(lambda0),
        lambda0_ci=None if lambda0_ci is None else (float(lambda0_ci[0]), float(lambda0_ci[1])),
        notes=tuple(notes),
    )
