"""Multitype competitive birth-death chains and their series drift pair.

Per-capita rates follow the density-dependent parameterization: type i gains
an individual at rate n_i b_i(n) and loses one at rate n_i d_i(n), with the
closed Lotka-Volterra form b_i(n) = lam_i + sum_j gamma_ij n_j and
d_i(n) = mu_i + sum_j c_ij n_j when the matrices are supplied.  The
absorbing set is every state with a zero coordinate (loss of a type is
final).  The drift pair is the truncated power series
V(n) = sum_{k<=|n|} k^-alpha with tail companion phi(n) = sum_{k>|n|} k^-beta,
both zero on the absorbing set; their exact generator images reduce to
closed forms in the total population size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import zeta

from . import _bd_kernels
from .core.rng import RngStream
from .lyapunov import CheckCertificate, LyapunovPair

__all__ = [
    "BDModel",
    "BDLyapunovParams",
    "gillespie_step",
    "bd_generator_apply",
    "simplex_slice_chunks",
    "dbar_dunder",
    "dbar_dunder_bounds",
    "check_assumption_PNM",
    "auto_select_eta",
    "select_bd_params",
    "lyapunov_V",
    "lyapunov_phi",
    "bd_pair_images",
    "build_bd_pair",
    "lphi_lower_bound",
]

SLICE_BUDGET = 10**7


@dataclass(frozen=True, eq=False)
class BDModel:
    """Immutable multitype birth-death chain on Z_+^d.

    ``lv`` holds the (lam, mu, gamma, c) arrays of the Lotka-Volterra
    parameterization when available; simulation then runs through the jitted
    kernels, and the closed-form slice-statistic bounds become available.
    Generic models supply vectorized per-capita rate callables instead.
    """

    name: str
    dimension: int
    birth_fn: Callable | None = field(default=None, repr=False)
    death_fn: Callable | None = field(default=None, repr=False)
    lv: tuple | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")
        if self.lv is None and (self.birth_fn is None or self.death_fn is None):
            raise ValueError("need either the LV parameterization or rate callables")

    @property
    def state_dtype(self) -> np.dtype:
        return np.dtype(np.int64)

    # -- constructors -------------------------------------------------------

    @classmethod
    def lotka_volterra(cls, lam, mu, gamma, c, name: str = "lv_bd") -> "BDModel":
        """Chain with b_i(n) = lam_i + (gamma n)_i and d_i(n) = mu_i + (c n)_i."""
        lam = np.ascontiguousarray(lam, dtype=np.float64)
        mu = np.ascontiguousarray(mu, dtype=np.float64)
        gamma = np.ascontiguousarray(gamma, dtype=np.float64)
        c = np.ascontiguousarray(c, dtype=np.float64)
        d = lam.shape[0]
        if lam.shape != (d,) or mu.shape != (d,) or gamma.shape != (d, d) or c.shape != (d, d):
            raise ValueError("need lam, mu of shape (d,) and gamma, c of shape (d, d)")
        if min(lam.min(), mu.min(), gamma.min(), c.min()) < 0.0:
            raise ValueError("all LV parameters must be nonnegative")
        return cls(name=name, dimension=d, lv=(lam, mu, gamma, c))

    @classmethod
    def from_callables(cls, dimension: int, birth: Callable, death: Callable,
                       name: str = "bd") -> "BDModel":
        """Chain with arbitrary vectorized per-capita rates (states (m,d) -> (m,d))."""
        d = int(dimension)

        def checked(fn, label):
            def wrapped(states):
                out = np.asarray(fn(states), dtype=float)
                if out.shape != states.shape:
                    raise ValueError(f"{label} rates have shape {out.shape}, want {states.shape}")
                return out
            return wrapped

        return cls(name=name, dimension=d,
                   birth_fn=checked(birth, "birth"), death_fn=checked(death, "death"))

    @classmethod
    def tabulated(cls, birth_table, death_table, name: str = "tabulated_bd",
                  outside: str = "clamp") -> "BDModel":
        """Chain with rates looked up on a finite box.

        Tables have shape (B_1+1, ..., B_d+1, d): per-capita rates indexed by
        the state coordinates.  Outside the box either the nearest in-box
        entry is used ("clamp") or all rates vanish ("zero").
        """
        bt = np.asarray(birth_table, dtype=float)
        dt = np.asarray(death_table, dtype=float)
        d = bt.shape[-1]
        if bt.ndim != d + 1 or dt.shape != bt.shape:
            raise ValueError("tables must have shape box_shape + (d,) and agree")
        if outside not in ("clamp", "zero"):
            raise ValueError("outside must be 'clamp' or 'zero'")
        if min(bt.min(), dt.min()) < 0.0:
            raise ValueError("tabulated rates must be nonnegative")

        def lookup(table):
            def fn(states):
                states = np.atleast_2d(np.asarray(states, dtype=np.int64))
                clipped = tuple(
                    np.clip(states[:, i], 0, table.shape[i] - 1) for i in range(d)
                )
                vals = table[clipped]
                if outside == "zero":
                    inside = np.ones(states.shape[0], dtype=bool)
                    for i in range(d):
                        inside &= states[:, i] < table.shape[i]
                    vals = np.where(inside[:, None], vals, 0.0)
                return vals
            return fn

        return cls(name=name, dimension=d,
                   birth_fn=lookup(bt), death_fn=lookup(dt))

    # -- rates and absorption ----------------------------------------------

    def birth_percapita(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states))
        if self.lv is not None:
            lam, _, gamma, _ = self.lv
            return lam + states @ gamma.T
        return self.birth_fn(states)

    def death_percapita(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states))
        if self.lv is not None:
            _, mu, _, c = self.lv
            return mu + states @ c.T
        return self.death_fn(states)

    def is_absorbed(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states))
        return (states == 0).any(axis=1)

    def _require_alive(self, x0: np.ndarray) -> np.ndarray:
        x0 = np.ascontiguousarray(np.ravel(x0), dtype=np.int64)
        if x0.shape != (self.dimension,):
            raise ValueError(f"state has shape {x0.shape}, model dimension is {self.dimension}")
        if bool((x0 == 0).any()):
            raise ValueError(f"state {tuple(x0.tolist())} is absorbed")
        return x0

    def _py_rates(self, n: np.ndarray) -> tuple[np.ndarray, float]:
        bpc = np.asarray(self.birth_percapita(n[None, :]), dtype=float)[0]
        dpc = np.asarray(self.death_percapita(n[None, :]), dtype=float)[0]
        rates = np.concatenate([n * bpc, n * dpc])
        return rates, float(rates.sum())

    # -- trajectory drivers -------------------------------------------------

    def simulate_one(self, state0, times, horizon, max_steps, gen):
        x0 = np.ascontiguousarray(state0, dtype=np.int64)
        times = np.ascontiguousarray(times, dtype=np.float64)
        if self.lv is not None:
            return _bd_kernels.lv_path_one(
                gen, x0, *self.lv, times, float(horizon), int(max_steps)
            )
        return self._py_path_one(x0, times, float(horizon), int(max_steps), gen)

    def _py_path_one(self, n0, times, horizon, max_events, gen):
        d = self.dimension
        T = times.shape[0]
        n = n0.copy()
        out = np.zeros((T, d), dtype=np.int64)
        flags = np.zeros(T, dtype=bool)
        t = 0.0
        gi = 0
        events = 0
        tau = math.inf
        guard = False
        while True:
            rates, q = self._py_rates(n)
            if q <= 0.0:
                out[gi:] = n
                break
            tn = t + gen.exponential(1.0 / q)
            while gi < T and times[gi] < tn:
                out[gi] = n
                gi += 1
            if gi >= T or tn > horizon:
                break
            k = int(np.searchsorted(np.cumsum(rates), gen.random() * q, side="right"))
            k = min(k, 2 * d - 1)
            if k < d:
                n[k] += 1
            else:
                n[k - d] -= 1
                if n[k - d] == 0:
                    tau = tn
                    out[gi:] = n
                    flags[gi:] = True
                    break
            t = tn
            events += 1
            if events >= max_events:
                guard = True
                out[gi:] = n
                break
        return out, flags, tau, guard

    def sample_absorption_times(self, x0, n, horizon, max_steps, stream: RngStream) -> np.ndarray:
        """Absorption times of n independent trajectories; inf when censored."""
        x0 = self._require_alive(x0)
        out = np.empty(n)
        for i in range(int(n)):
            gen = stream.child(i).generator()
            if self.lv is not None:
                tau, _ = _bd_kernels.lv_absorption_time(
                    gen, x0, *self.lv, float(horizon), int(max_steps)
                )
            else:
                tau = self._py_absorption_time(x0, float(horizon), int(max_steps), gen)
            out[i] = tau
        return out

    def _py_absorption_time(self, n0, horizon, max_events, gen) -> float:
        n = n0.copy()
        t = 0.0
        events = 0
        while True:
            rates, q = self._py_rates(n)
            if q <= 0.0:
                return math.inf
            t += gen.exponential(1.0 / q)
            if t > horizon:
                return math.inf
            k = int(np.searchsorted(np.cumsum(rates), gen.random() * q, side="right"))
            k = min(k, 2 * self.dimension - 1)
            if k < self.dimension:
                n[k] += 1
            else:
                n[k - self.dimension] -= 1
                if n[k - self.dimension] == 0:
                    return t
            events += 1
            if events >= max_events:
                return math.inf

    def sample_return_times(self, x0, n, total_threshold, horizon, max_steps,
                            stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
        """First passage into {|n| <= threshold} stopped at absorption.

        Returns (outcomes, times) with outcome 0 = entered the core,
        1 = absorbed first, 2 = censored at the horizon or guard.
        """
        x0 = self._require_alive(x0)
        outcomes = np.empty(n, dtype=np.int64)
        times = np.empty(n)
        for i in range(int(n)):
            gen = stream.child(i).generator()
            if self.lv is not None:
                o, t, _ = _bd_kernels.lv_hit_or_absorb(
                    gen, x0, *self.lv, int(total_threshold), float(horizon), int(max_steps)
                )
            else:
                o, t = self._py_hit_or_absorb(
                    x0, int(total_threshold), float(horizon), int(max_steps), gen
                )
            outcomes[i] = o
            times[i] = t
        return outcomes, times

    def _py_hit_or_absorb(self, n0, threshold, horizon, max_events, gen):
        n = n0.copy()
        s = int(n.sum())
        if s <= threshold:
            return 0, 0.0
        t = 0.0
        events = 0
        while True:
            rates, q = self._py_rates(n)
            if q <= 0.0:
                return 2, t
            t += gen.exponential(1.0 / q)
            if t > horizon:
                return 2, t
            k = int(np.searchsorted(np.cumsum(rates), gen.random() * q, side="right"))
            k = min(k, 2 * self.dimension - 1)
            if k < self.dimension:
                n[k] += 1
                s += 1
            else:
                n[k - self.dimension] -= 1
                s -= 1
                if n[k - self.dimension] == 0:
                    return 1, t
            if s <= threshold:
                return 0, t
            events += 1
            if events >= max_events:
                return 2, t

    def sample_exit_states(self, x0, levels, n, horizon, max_steps,
                           stream: RngStream) -> tuple[np.ndarray, np.ndarray]:
        """States at the first exits of {|n| <= level} for each level.

        Absorption before an exit records the absorption state at the
        remaining levels.  Returns (states (n, L, d), resolved (n, L)).
        """
        x0 = self._require_alive(x0)
        levels = np.ascontiguousarray(levels, dtype=np.int64)
        L = levels.shape[0]
        states = np.empty((n, L, self.dimension), dtype=np.int64)
        resolved = np.empty((n, L), dtype=bool)
        for i in range(int(n)):
            gen = stream.child(i).generator()
            if self.lv is not None:
                st, res, _ = _bd_kernels.lv_exit_states(
                    gen, x0, *self.lv, levels, float(horizon), int(max_steps)
                )
            else:
                raise NotImplementedError("exit-state sampling needs the LV parameterization")
            states[i] = st
            resolved[i] = res
        return states, resolved

    def fv_epoch(self, state, epoch_len, snapshot, self_idx, max_events, gen):
        """Advance one interacting particle through a synchronization epoch."""
        if self.lv is not None:
            return _bd_kernels.lv_fv_epoch(
                gen, state, float(epoch_len), snapshot, int(self_idx), *self.lv, int(max_events)
            )
        return self._py_fv_epoch(state, float(epoch_len), snapshot, int(self_idx),
                                 int(max_events), gen)

    def _py_fv_epoch(self, state, epoch_len, snapshot, self_idx, max_events, gen):
        d = self.dimension
        n = state.copy()
        n_part = snapshot.shape[0]
        t = 0.0
        events = 0
        count = 0
        while True:
            rates, q = self._py_rates(n)
            if q <= 0.0:
                break
            t += gen.exponential(1.0 / q)
            if t > epoch_len:
                break
            k = int(np.searchsorted(np.cumsum(rates), gen.random() * q, side="right"))
            k = min(k, 2 * d - 1)
            if k < d:
                n[k] += 1
            else:
                n[k - d] -= 1
                if n[k - d] == 0:
                    r = min(int(gen.random() * (n_part - 1)), n_part - 2)
                    j = r if r < self_idx else r + 1
                    n = snapshot[j].copy()
                    count += 1
            events += 1
            if events >= max_events:
                return n, count, True
        return n, count, False


# ---------------------------------------------------------------------------
# single-step and generator primitives
# ---------------------------------------------------------------------------


def gillespie_step(model: BDModel, state, rng) -> tuple[float, np.ndarray]:
    """One exact jump: (holding time, next state).

    ``rng`` is an RngStream (one draw pair per call) or a Generator to be
    advanced across repeated calls.  A state with zero total rate is frozen:
    returns (inf, state).
    """
    state = model._require_alive(state)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    rates, q = model._py_rates(state)
    if q <= 0.0:
        return math.inf, state.copy()
    hold = float(gen.exponential(1.0 / q))
    k = int(np.searchsorted(np.cumsum(rates), gen.random() * q, side="right"))
    k = min(k, 2 * model.dimension - 1)
    nxt = state.copy()
    if k < model.dimension:
        nxt[k] += 1
    else:
        nxt[k - model.dimension] -= 1
    return hold, nxt


def _eval_rows(f: Callable, states: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(f(states), dtype=float)
        if vals.shape == (states.shape[0],):
            return vals
    except Exception:
        pass
    return np.array([float(f(s)) for s in states])


def bd_generator_apply(model: BDModel, f: Callable, n) -> float:
    """Exact generator image sum_j [f(n+-e_j) - f(n)] n_j (b_j or d_j)(n)."""
    n = model._require_alive(n)
    d = model.dimension
    bpc = np.asarray(model.birth_percapita(n[None, :]), dtype=float)[0]
    dpc = np.asarray(model.death_percapita(n[None, :]), dtype=float)[0]
    stack = np.tile(n, (2 * d + 1, 1))
    for j in range(d):
        stack[1 + j, j] += 1
        stack[1 + d + j, j] -= 1
    vals = _eval_rows(f, stack)
    base = vals[0]
    up = vals[1 : d + 1]
    down = vals[d + 1 :]
    return float(np.dot(n * bpc, up - base) + np.dot(n * dpc, down - base))


# ---------------------------------------------------------------------------
# slice statistics
# ---------------------------------------------------------------------------


def simplex_slice_chunks(k: int, d: int):
    """Yield blocks of all positive integer states with coordinate sum k."""
    if d < 1 or k < d:
        raise ValueError(f"need k >= d >= 1, got k={k}, d={d}")
    if d == 1:
        yield np.array([[k]], dtype=np.int64)
        return
    if d == 2:
        n1 = np.arange(1, k, dtype=np.int64)
        yield np.stack([n1, k - n1], axis=1)
        return
    for n1 in range(1, k - d + 2):
        for block in simplex_slice_chunks(k - n1, d - 1):
            yield np.column_stack([np.full(block.shape[0], n1, dtype=np.int64), block])


def dbar_dunder(model: BDModel, k: int, budget: int = SLICE_BUDGET) -> tuple[float, float]:
    """Extremes over the slice {|n| = k} of the death-domination statistics.

    Returns (dbar, dunder) where dbar = k sup_n sum_i 1_{n_i=1} d_i(n) and
    dunder = inf_n sum_i n_i [1_{n_i != 1} d_i(n) - b_i(n)], both by
    exhaustive enumeration.  Slices beyond ``budget`` states switch to the
    conservative closed-form bounds for LV models and are an error otherwise.
    """
    d = model.dimension
    if k < d:
        raise ValueError(f"k must be >= dimension {d} so the slice is nonempty")
    size = math.comb(k - 1, d - 1)
    if size > budget:
        if model.lv is None:
            raise ValueError(
                f"slice |n| = {k} holds {size} states, beyond the enumeration budget "
                f"{budget}; the closed-form bound path needs the LV parameterization"
            )
        return dbar_dunder_bounds(model, k)
    sup_stat = -math.inf
    inf_stat = math.inf
    for block in simplex_slice_chunks(k, d):
        bpc = np.asarray(model.birth_percapita(block), dtype=float)
        dpc = np.asarray(model.death_percapita(block), dtype=float)
        ones = block == 1
        sup_stat = max(sup_stat, float((dpc * ones).sum(axis=1).max()))
        inf_stat = min(inf_stat, float((block * (dpc * ~ones - bpc)).sum(axis=1).min()))
    return k * sup_stat, inf_stat


def _simplex_quadratic_min(A: np.ndarray, b: np.ndarray, total: float) -> float:
    """Exact min of x'Ax + b'x over {x >= 0, sum x = total} by face enumeration.

    Every face's interior stationary point is a candidate; minima attained on
    a face boundary are caught by the enumeration of its sub-faces, and the
    single-coordinate faces are the simplex vertices, so the scan is complete.
    """
    d = b.shape[0]
    best = math.inf
    for mask in range(1, 1 << d):
        S = [i for i in range(d) if (mask >> i) & 1]
        m = len(S)
        M = np.zeros((m + 1, m + 1))
        M[:m, :m] = 2.0 * A[np.ix_(S, S)]
        M[:m, m] = -1.0
        M[m, :m] = 1.0
        rhs = np.concatenate([-b[S], [total]])
        try:
            sol = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            continue
        xS = sol[:m]
        if np.all(xS >= -1e-9):
            x = np.zeros(d)
            x[S] = np.clip(xS, 0.0, None)
            best = min(best, float(x @ A @ x + b @ x))
    return best


def dbar_dunder_bounds(model: BDModel, k: int) -> tuple[float, float]:
    """Conservative (dbar upper bound, dunder lower bound) for LV models.

    The dunder bound relaxes the integer slice to the continuous simplex
    (a superset, so its exact quadratic minimum is a valid lower bound) and
    subtracts the worst-case contribution of the coordinates pinned at one;
    the dbar bound majorizes every per-capita death rate on the slice.
    """
    if model.lv is None:
        raise ValueError("closed-form bounds need the LV parameterization")
    lam, mu, gamma, c = model.lv
    cmax = c.max(axis=1)
    correction = float(np.sum(mu + cmax * k))
    dbar_up = k * correction
    A = c - gamma
    A = (A + A.T) / 2.0
    qmin = _simplex_quadratic_min(A, mu - lam, float(k))
    return dbar_up, qmin - correction


def _parse_k_range(k_range, d: int) -> np.ndarray:
    if isinstance(k_range, tuple) and len(k_range) == 2:
        ks = np.arange(int(k_range[0]), int(k_range[1]) + 1)
    else:
        ks = np.asarray(sorted(int(k) for k in k_range))
    if ks.size == 0 or ks[0] < d:
        raise ValueError(f"k range must be nonempty with min >= dimension {d}")
    return ks


def _pnm_certificate(ks: np.ndarray, dbar: np.ndarray, dunder: np.ndarray,
                     eta: float) -> CheckCertificate:
    # the hypothesis quantifies over all k large enough: look for a threshold
    # k0 in the first half of the range past which the slack stays nonnegative
    slack = dunder - eta * dbar
    viol = slack < 0.0
    half = len(ks) // 2
    k0_idx = 0 if not viol.any() else int(np.flatnonzero(viol)[-1]) + 1
    ineq_ok = k0_idx <= half
    with np.errstate(over="ignore"):
        trend = dunder / ks.astype(float) ** (1.0 + eta)
    tail = trend[half:]
    drops = np.diff(tail) < -1e-9 * np.maximum(1.0, np.abs(tail[:-1]))
    domain = f"k in [{int(ks[0])}, {int(ks[-1])}]"
    witnesses = {
        "eta": eta,
        "holds_from_k": int(ks[k0_idx]) if k0_idx < len(ks) else None,
        "threshold_cap_k": int(ks[half]),
        "min_slack_tail": float(slack[k0_idx:].min()) if k0_idx < len(ks) else None,
        "trend_first": float(trend[0]),
        "trend_mid": float(trend[half]),
        "trend_last": float(trend[-1]),
        "trend_nondecreasing_tail": bool(not drops.any()),
    }
    counterexamples: list = []
    if not ineq_ok:
        j = int(np.flatnonzero(viol & (np.arange(len(ks)) > half))[0]) if (
            viol & (np.arange(len(ks)) > half)).any() else int(np.flatnonzero(viol)[0])
        counterexamples.append(
            {"k": int(ks[j]), "dunder": float(dunder[j]), "eta_dbar": float(eta * dbar[j])}
        )
    if drops.any():
        for j in np.flatnonzero(drops)[:5]:
            counterexamples.append(
                {"k": int(ks[half + j + 1]), "trend": float(tail[j + 1]),
                 "trend_prev": float(tail[j])}
            )
    verdict = "holds" if not counterexamples else "violated"
    return CheckCertificate(
        check="assumption_death_domination",
        verdict=verdict,
        witnesses=witnesses,
        counterexamples=tuple(counterexamples),
        domain=domain,
        qualifier="exact-enumeration",
    )


def check_assumption_PNM(model: BDModel, eta: float, k_range,
                         budget: int = SLICE_BUDGET) -> CheckCertificate:
    """Verify dunder(k) >= eta dbar(k) with a diverging trend dunder(k)/k^(1+eta).

    ``k_range`` is an inclusive (lo, hi) tuple or an explicit iterable of
    totals.  The trend check requires the statistic to be nondecreasing over
    the second half of the range, the desk-scale stand-in for divergence.
    """
    if eta <= 0.0:
        raise ValueError("eta must be positive")
    ks = _parse_k_range(k_range, model.dimension)
    pairs = [dbar_dunder(model, int(k), budget) for k in ks]
    dbar = np.array([p[0] for p in pairs])
    dunder = np.array([p[1] for p in pairs])
    return _pnm_certificate(ks, dbar, dunder, eta)


def auto_select_eta(model: BDModel, k_range, budget: int = SLICE_BUDGET,
                    ) -> tuple[float, CheckCertificate]:
    """Largest eta in {2^-1, ..., 2^-12} passing check_assumption_PNM."""
    ks = _parse_k_range(k_range, model.dimension)
    pairs = [dbar_dunder(model, int(k), budget) for k in ks]
    dbar = np.array([p[0] for p in pairs])
    dunder = np.array([p[1] for p in pairs])
    for j in range(1, 13):
        eta = 2.0**-j
        cert = _pnm_certificate(ks, dbar, dunder, eta)
        if cert.holds:
            return eta, cert
    raise ValueError(
        "no eta in {2^-1..2^-12} satisfies the death-domination hypothesis on "
        f"k in [{int(ks[0])}, {int(ks[-1])}]"
    )


# ---------------------------------------------------------------------------
# series pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BDLyapunovParams:
    """Exponents of the series pair; auto-selection ties them to eta.

    ``k_star`` is the localizing threshold certified during selection: the
    drift margin dunder(k) - dbar(k)/(beta-1) is nonnegative for k >= k_star
    on the checked range.
    """

    alpha: float
    beta: float
    epsilon: float
    eta: float
    k_star: int | None = None

    def __post_init__(self) -> None:
        if self.alpha <= 1.0 or self.beta <= 1.0:
            raise ValueError("alpha and beta must exceed 1 (the series must converge)")
        if self.epsilon <= 0.0 or self.eta <= 0.0:
            raise ValueError("epsilon and eta must be positive")


def _alive_totals(states: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    arr = np.asarray(states)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    alive = (arr >= 1).all(axis=1)
    totals = arr.sum(axis=1).astype(np.int64)
    return arr, alive, totals, single


def lyapunov_V(params: BDLyapunovParams, n) -> np.ndarray | float:
    """V(n) = sum_{k=1}^{|n|} k^-alpha on the living states, 0 on absorption."""
    _, alive, totals, single = _alive_totals(n)
    vals = zeta(params.alpha, 1.0) - zeta(params.alpha, totals.astype(float) + 1.0)
    out = np.where(alive, vals, 0.0)
    return float(out[0]) if single else out


def lyapunov_phi(params: BDLyapunovParams, n) -> np.ndarray | float:
    """phi(n) = sum_{k=|n|+1}^infty k^-beta on the living states, 0 on absorption."""
    _, alive, totals, single = _alive_totals(n)
    vals = zeta(params.beta, totals.astype(float) + 1.0)
    out = np.where(alive, vals, 0.0)
    return float(out[0]) if single else out


def bd_pair_images(model: BDModel, params: BDLyapunovParams,
                   states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact (LV, Lphi) for the series pair, closed form in |n|.

    Both series shift by one term under a jump that keeps the state alive,
    so the images collapse to the total birth rate, the total death rate
    over coordinates above one, and the killing flux through coordinates
    equal to one.
    """
    arr, alive, totals, _ = _alive_totals(states)
    s = totals.astype(float)
    bpc = np.asarray(model.birth_percapita(arr), dtype=float)
    dpc = np.asarray(model.death_percapita(arr), dtype=float)
    ones = arr == 1
    B = (arr * bpc).sum(axis=1)
    D2 = (arr * dpc * ~ones).sum(axis=1)
    D1 = (dpc * ones).sum(axis=1)
    V = np.asarray(lyapunov_V(params, arr), dtype=float)
    phi = np.asarray(lyapunov_phi(params, arr), dtype=float)
    s_safe = np.where(s > 0, s, 1.0)
    up_a = (s + 1.0) ** -params.alpha
    dn_a = s_safe**-params.alpha
    up_b = (s + 1.0) ** -params.beta
    dn_b = s_safe**-params.beta
    LV = np.where(alive, B * up_a - D2 * dn_a - D1 * V, 0.0)
    Lphi = np.where(alive, -B * up_b + D2 * dn_b - D1 * phi, 0.0)
    return LV, Lphi


def lphi_lower_bound(model: BDModel, params: BDLyapunovParams, k: int,
                     budget: int = SLICE_BUDGET) -> float:
    """The provable floor |n|^-beta [dunder(|n|) - dbar(|n|)/(beta-1)] at |n| = k."""
    dbar, dunder = dbar_dunder(model, k, budget)
    return float(k) ** -params.beta * (dunder - dbar / (params.beta - 1.0))


def select_bd_params(model: BDModel, k_check: int = 200, eta: float | None = None,
                     budget: int = SLICE_BUDGET) -> BDLyapunovParams:
    """Smallest beta on a log grid making the drift margin nonnegative past k*.

    Searches beta in 1 + geomspace(1e-2, 1e3, 201) for the smallest value
    whose margin dunder(k) - dbar(k)/(beta-1) is nonnegative on [k*, k_check]
    for some threshold k* at most k_check/2, then sets alpha = 1 + eta/2 and
    epsilon = eta/(2(beta-1)).  ``eta`` defaults to the auto-search.
    """
    d = model.dimension
    ks = np.arange(d, k_check + 1)
    pairs = [dbar_dunder(model, int(k), budget) for k in ks]
    dbar = np.array([p[0] for p in pairs])
    dunder = np.array([p[1] for p in pairs])
    if eta is None:
        eta = None
        for j in range(1, 13):
            cand = 2.0**-j
            if _pnm_certificate(ks, dbar, dunder, cand).holds:
                eta = cand
                break
        if eta is None:
            raise ValueError(
                "parameter selection requires the death-domination hypothesis; "
                "no eta in {2^-1..2^-12} passes on the checked range"
            )
    else:
        cert = _pnm_certificate(ks, dbar, dunder, float(eta))
        if not cert.holds:
            raise ValueError(
                f"eta={eta} fails the death-domination hypothesis at "
                f"k={cert.counterexamples[0].get('k')}"
            )
    k_cap = max(d, k_check // 2)
    betas = 1.0 + np.geomspace(1e-2, 1e3, 201)
    for beta in betas:
        margins = dunder - dbar / (beta - 1.0)
        ok = margins >= 0.0
        k_star = d if ok.all() else int(ks[~ok][-1]) + 1
        if k_star <= k_cap:
            return BDLyapunovParams(
                alpha=1.0 + eta / 2.0,
                beta=float(beta),
                epsilon=eta / (2.0 * (beta - 1.0)),
                eta=float(eta),
                k_star=int(k_star),
            )
    bad = dunder - dbar / (betas[-1] - 1.0) < 0.0
    binding = int(ks[bad][-1])
    raise ValueError(
        f"no beta <= {betas[-1]:.4g} achieves a nonnegative drift margin below "
        f"k_check/2; binding total population k = {binding}"
    )


def build_bd_pair(model: BDModel, params: BDLyapunovParams) -> LyapunovPair:
    """Bundle the series pair with its exact generator images for ``model``."""

    def V(states):
        return np.asarray(lyapunov_V(params, np.atleast_2d(states)), dtype=float)

    def phi(states):
        return np.asarray(lyapunov_phi(params, np.atleast_2d(states)), dtype=float)

    def LV(states):
        return bd_pair_images(model, params, states)[0]

    def Lphi(states):
        return bd_pair_images(model, params, states)[1]

    return LyapunovPair(
        name=f"bd_series[{model.name}]",
        epsilon=params.epsilon,
        V=V,
        phi=phi,
        LV=LV,
        Lphi=Lphi,
        meta={
            "alpha": params.alpha,
            "beta": params.beta,
            "epsilon": params.epsilon,
            "eta": params.eta,
            "k_star": params.k_star,
            "model": model.name,
        },
    )
