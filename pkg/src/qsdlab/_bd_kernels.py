"""Jitted per-trajectory loops for the competitive birth-death chain.

All kernels operate on the closed-form rate parameterization (per-capita
birth lam_i + sum_j gam_ij n_j, per-capita death mu_i + sum_j c_ij n_j) and
draw from the numpy Generator passed in, one generator per trajectory.
Recorded paths are right-continuous: a grid instant equal to a jump time
records the post-jump state.
"""

from __future__ import annotations

import numba
import numpy as np

_SIG_CACHE = True


@numba.njit(cache=_SIG_CACHE)
def _lv_rates(n, lam, mu, gam, c, rates):
    """Fill rates[0:d] with birth and rates[d:2d] with death rates; return total."""
    d = n.shape[0]
    q = 0.0
    for i in range(d):
        br = lam[i]
        dr = mu[i]
        for j in range(d):
            br += gam[i, j] * n[j]
            dr += c[i, j] * n[j]
        rates[i] = n[i] * br
        rates[d + i] = n[i] * dr
        q += rates[i] + rates[d + i]
    return q


@numba.njit(cache=_SIG_CACHE)
def _pick_jump(rates, u):
    k = 0
    acc = 0.0
    for k in range(rates.shape[0]):
        acc += rates[k]
        if u < acc:
            break
    return k


@numba.njit(cache=_SIG_CACHE)
def lv_path_one(gen, n0, lam, mu, gam, c, times, horizon, max_events):
    """One Gillespie trajectory recorded on a fixed grid.

    Returns (path, absorbed_flags, tau, guard_tripped).  After absorption the
    state is frozen at its entry point into the boundary; after a guard trip
    it is frozen at the last simulated state with the flag raised instead.
    """
    d = n0.shape[0]
    T = times.shape[0]
    n = n0.copy()
    out = np.zeros((T, d), dtype=np.int64)
    flags = np.zeros(T, dtype=np.bool_)
    rates = np.zeros(2 * d)
    t = 0.0
    gi = 0
    events = 0
    absorbed = False
    tau = np.inf
    guard = False
    while True:
        if absorbed:
            while gi < T:
                out[gi] = n
                flags[gi] = True
                gi += 1
            break
        q = _lv_rates(n, lam, mu, gam, c, rates)
        if q <= 0.0:
            while gi < T:  # frozen but alive
                out[gi] = n
                gi += 1
            break
        tn = t + gen.exponential(1.0 / q)
        while gi < T and times[gi] < tn:
            out[gi] = n
            gi += 1
        if gi >= T or tn > horizon:
            break
        k = _pick_jump(rates, gen.random() * q)
        if k < d:
            n[k] += 1
        else:
            n[k - d] -= 1
            if n[k - d] == 0:
                absorbed = True
                tau = tn
        t = tn
        events += 1
        if events >= max_events and not absorbed:
            guard = True
            while gi < T:
                out[gi] = n
                gi += 1
            break
    return out, flags, tau, guard


@numba.njit(cache=_SIG_CACHE)
def lv_absorption_time(gen, n0, lam, mu, gam, c, horizon, max_events):
    """Absorption time of one trajectory, inf if censored at the horizon.

    Returns (tau, guard_tripped).
    """
    d = n0.shape[0]
    n = n0.copy()
    rates = np.zeros(2 * d)
    t = 0.0
    events = 0
    while True:
        q = _lv_rates(n, lam, mu, gam, c, rates)
        if q <= 0.0:
            return np.inf, False
        t = t + gen.exponential(1.0 / q)
        if t > horizon:
            return np.inf, False
        k = _pick_jump(rates, gen.random() * q)
        if k < d:
            n[k] += 1
        else:
            n[k - d] -= 1
            if n[k - d] == 0:
                return t, False
        events += 1
        if events >= max_events:
            return np.inf, True


@numba.njit(cache=_SIG_CACHE)
def lv_hit_or_absorb(gen, n0, lam, mu, gam, c, total_threshold, horizon, max_events):
    """Run until |n| <= total_threshold (outcome 0) or absorption (outcome 1).

    Returns (outcome, time, guard); outcome 2 means censored at the horizon.
    """
    d = n0.shape[0]
    n = n0.copy()
    s = 0
    for i in range(d):
        s += n[i]
    if s <= total_threshold:
        return 0, 0.0, False
    rates = np.zeros(2 * d)
    t = 0.0
    events = 0
    while True:
        q = _lv_rates(n, lam, mu, gam, c, rates)
        if q <= 0.0:
            return 2, t, False
        t = t + gen.exponential(1.0 / q)
        if t > horizon:
            return 2, t, False
        k = _pick_jump(rates, gen.random() * q)
        if k < d:
            n[k] += 1
            s += 1
        else:
            n[k - d] -= 1
            s -= 1
            if n[k - d] == 0:
                return 1, t, False
        if s <= total_threshold:
            return 0, t, False
        events += 1
        if events >= max_events:
            return 2, t, True


@numba.njit(cache=_SIG_CACHE)
def lv_exit_states(gen, n0, lam, mu, gam, c, levels, horizon, max_events):
    """States at the first exit times of the sets {|n| <= level}.

    For each level, records the state the first time the total population
    exceeds the level, or the absorption state if the chain is absorbed
    first.  Returns (states (n_levels, d), resolved flags, guard).
    """
    d = n0.shape[0]
    L = levels.shape[0]
    n = n0.copy()
    out = np.zeros((L, d), dtype=np.int64)
    resolved = np.zeros(L, dtype=np.bool_)
    rates = np.zeros(2 * d)
    s = 0
    for i in range(d):
        s += n[i]
    li = 0
    while li < L and s > levels[li]:
        out[li] = n
        resolved[li] = True
        li += 1
    t = 0.0
    events = 0
    while li < L:
        q = _lv_rates(n, lam, mu, gam, c, rates)
        if q <= 0.0:
            return out, resolved, False
        t = t + gen.exponential(1.0 / q)
        if t > horizon:
            return out, resolved, False
        k = _pick_jump(rates, gen.random() * q)
        if k < d:
            n[k] += 1
            s += 1
            while li < L and s > levels[li]:
                out[li] = n
                resolved[li] = True
                li += 1
        else:
            n[k - d] -= 1
            s -= 1
            if n[k - d] == 0:
                while li < L:  # absorbed before exiting the remaining sets
                    out[li] = n
                    resolved[li] = True
                    li += 1
                return out, resolved, False
        events += 1
        if events >= max_events:
            return out, resolved, True
    return out, resolved, False


@numba.njit(cache=_SIG_CACHE)
def lv_fv_epoch(gen, n_state, epoch_len, snapshot, self_idx, lam, mu, gam, c, max_events):
    """Advance one Fleming-Viot particle through one synchronization epoch.

    On absorption the particle jumps to the epoch-start location of a
    uniformly chosen other particle (from the frozen snapshot) and keeps
    evolving.  Returns (state, resample_count, guard).
    """
    d = n_state.shape[0]
    n = n_state.copy()
    rates = np.zeros(2 * d)
    n_part = snapshot.shape[0]
    t = 0.0
    events = 0
    count = 0
    while True:
        q = _lv_rates(n, lam, mu, gam, c, rates)
        if q <= 0.0:
            break
        t = t + gen.exponential(1.0 / q)
        if t > epoch_len:
            break
        k = _pick_jump(rates, gen.random() * q)
        if k < d:
            n[k] += 1
        else:
            n[k - d] -= 1
            if n[k - d] == 0:
                r = int(gen.random() * (n_part - 1))
                if r >= n_part - 1:
                    r = n_part - 2
                j = r if r < self_idx else r + 1
                for i in range(d):
                    n[i] = snapshot[j, i]
                count += 1
        events += 1
        if events >= max_events:
            return n, count, True
    return n, count, False
