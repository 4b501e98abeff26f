"""Jitted Euler loops for the competitive Feller diffusion.

All kernels use the Lotka-Volterra drift parameterization (per-capita rate
r_i - sum_j c_ij x_j) and the full-truncation Euler-Maruyama scheme: the
diffusion argument is clamped at zero, the base step is halved whenever the
smallest coordinate sits below 10*dt0, and any coordinate landing at or
below eps_abs is set to exactly zero with the whole state declared absorbed
and frozen.  Recorded paths are right-continuous, matching the birth-death
kernels: a grid instant equal to a step end records the post-step state.
"""

from __future__ import annotations

import numba
import numpy as np

_SIG_CACHE = True


@numba.njit(cache=_SIG_CACHE)
def _lv_drift_rates(x, r, c, out):
    """Fill out[i] with the per-capita rate r_i(x) of the LV drift."""
    d = x.shape[0]
    for i in range(d):
        acc = r[i]
        for j in range(d):
            acc -= c[i, j] * x[j]
        out[i] = acc


@numba.njit(cache=_SIG_CACHE)
def _em_step_inplace(gen, x, gamma, r, c, dt, eps_abs, rloc):
    """Advance x by one EM step of length dt; True if the state absorbed."""
    d = x.shape[0]
    _lv_drift_rates(x, r, c, rloc)
    absorbed = False
    for i in range(d):
        var = gamma[i] * x[i] * dt
        if var < 0.0:
            var = 0.0
        xi = x[i] + x[i] * rloc[i] * dt + np.sqrt(var) * gen.standard_normal()
        if xi <= eps_abs:
            xi = 0.0
            absorbed = True
        x[i] = xi
    return absorbed


@numba.njit(cache=_SIG_CACHE)
def _pick_dt(x, dt0):
    d = x.shape[0]
    xmin = x[0]
    for i in range(1, d):
        if x[i] < xmin:
            xmin = x[i]
    if xmin < 10.0 * dt0:
        return 0.5 * dt0
    return dt0


@numba.njit(cache=_SIG_CACHE)
def feller_em_path(gen, x0, gamma, r, c, times, horizon, dt0, eps_abs, max_steps):
    """One EM trajectory recorded on a fixed grid.

    Returns (path, absorbed_flags, tau, guard_tripped) with the same
    freezing conventions as lv_path_one.
    """
    d = x0.shape[0]
    T = times.shape[0]
    x = x0.copy()
    rloc = np.zeros(d)
    out = np.zeros((T, d))
    flags = np.zeros(T, dtype=np.bool_)
    t = 0.0
    gi = 0
    steps = 0
    absorbed = False
    tau = np.inf
    guard = False
    while True:
        if absorbed:
            while gi < T:
                out[gi] = x
                flags[gi] = True
                gi += 1
            break
        tn = t + _pick_dt(x, dt0)
        while gi < T and times[gi] < tn:
            out[gi] = x
            gi += 1
        if gi >= T or tn > horizon:
            break
        absorbed = _em_step_inplace(gen, x, gamma, r, c, tn - t, eps_abs, rloc)
        if absorbed:
            tau = tn
        t = tn
        steps += 1
        if steps >= max_steps and not absorbed:
            guard = True
            while gi < T:
                out[gi] = x
                gi += 1
            break
    return out, flags, tau, guard


@numba.njit(cache=_SIG_CACHE)
def feller_absorption_time(gen, x0, gamma, r, c, horizon, dt0, eps_abs, max_steps):
    """Absorption time of one EM trajectory, inf if censored at the horizon.

    Returns (tau, guard_tripped).
    """
    d = x0.shape[0]
    x = x0.copy()
    rloc = np.zeros(d)
    t = 0.0
    steps = 0
    while True:
        tn = t + _pick_dt(x, dt0)
        if tn > horizon:
            return np.inf, False
        if _em_step_inplace(gen, x, gamma, r, c, tn - t, eps_abs, rloc):
            return tn, False
        t = tn
        steps += 1
        if steps >= max_steps:
            return np.inf, True


@numba.njit(cache=_SIG_CACHE)
def feller_fv_epoch(gen, x_state, epoch_len, snapshot, self_idx, gamma, r, c,
                    dt0, eps_abs, max_steps):
    """Advance one Fleming-Viot particle through one synchronization epoch.

    On absorption the particle jumps to the epoch-start location of a
    uniformly chosen other particle and keeps evolving.  The last step is
    clipped so exactly epoch_len time is simulated.  Returns
    (state, resample_count, guard).
    """
    d = x_state.shape[0]
    x = x_state.copy()
    rloc = np.zeros(d)
    n_part = snapshot.shape[0]
    t = 0.0
    steps = 0
    count = 0
    while t < epoch_len:
        dt = _pick_dt(x, dt0)
        if t + dt > epoch_len:
            dt = epoch_len - t
        if dt <= 0.0:
            break
        if _em_step_inplace(gen, x, gamma, r, c, dt, eps_abs, rloc):
            rr = int(gen.random() * (n_part - 1))
            if rr >= n_part - 1:
                rr = n_part - 2
            j = rr if rr < self_idx else rr + 1
            for i in range(d):
                x[i] = snapshot[j, i]
            count += 1
        t = t + dt
        steps += 1
        if steps >= max_steps:
            return x, count, True
    return x, count, False


@numba.njit(cache=_SIG_CACHE)
def feller_coupled_triplet(gen, x0, gamma, r, c, a_eta_pow, eta, horizon, dt,
                           eps_abs, max_steps):
    """Drive X and the two dominating diffusions with shared Brownian noise.

    The three processes are advanced in the square-root coordinates
    y_i = sqrt(x_i), where the noise is additive and the Euler maps of the
    dominating drifts are monotone, so the per-capita bound
    r_i(x) <= a^eta - x_i^eta transfers to a stepwise order.  Xhat has
    per-capita drift a^eta (linear), Xbar has a^eta - x^eta (logistic).
    The step is fixed at dt for all three so increments stay shared.

    Returns (max_excess_hat, max_excess_bar, min_margin_bar, t_end,
    x_absorbed): the largest values of x_i - xhat_i and x_i - xbar_i seen at
    any recorded step, the smallest 1 + dt*fbar' encountered (positivity
    certifies monotonicity of the Xbar Euler map), the time the comparison
    ended, and whether it ended by absorption of X.
    """
    d = x0.shape[0]
    y = np.sqrt(x0)
    yh = y.copy()
    yb = y.copy()
    hat_alive = np.ones(d, dtype=np.bool_)
    bar_alive = np.ones(d, dtype=np.bool_)
    rloc = np.zeros(d)
    yfloor = np.sqrt(eps_abs)
    sq_dt = np.sqrt(dt)
    max_eh = -np.inf
    max_eb = -np.inf
    min_margin = np.inf
    t = 0.0
    steps = 0
    x_absorbed = False
    while t + dt <= horizon and steps < max_steps:
        # x = y*y feeds the LV per-capita rates of the true process
        for i in range(d):
            acc = r[i]
            for j in range(d):
                acc -= c[i, j] * y[j] * y[j]
            rloc[i] = acc
        for i in range(d):
            dw = sq_dt * gen.standard_normal()
            noise = 0.5 * np.sqrt(gamma[i]) * dw
            # true process
            fy = 0.5 * y[i] * rloc[i] - gamma[i] / (8.0 * y[i])
            yn = y[i] + fy * dt + noise
            if yn <= yfloor:
                yn = 0.0
                x_absorbed = True
            y[i] = yn
            # linear-drift dominator
            if hat_alive[i]:
                fh = 0.5 * yh[i] * a_eta_pow - gamma[i] / (8.0 * yh[i])
                yhn = yh[i] + fh * dt + noise
                if yhn <= yfloor:
                    yhn = 0.0
                    hat_alive[i] = False
                yh[i] = yhn
            # logistic dominator, with the monotonicity margin of its map
            if bar_alive[i]:
                ybi = yb[i]
                fb = 0.5 * ybi * (a_eta_pow - ybi ** (2.0 * eta)) \
                    - gamma[i] / (8.0 * ybi)
                fbp = 0.5 * (a_eta_pow - (1.0 + 2.0 * eta) * ybi ** (2.0 * eta)) \
                    + gamma[i] / (8.0 * ybi * ybi)
                margin = 1.0 + dt * fbp
                if margin < min_margin:
                    min_margin = margin
                ybn = ybi + fb * dt + noise
                if ybn <= yfloor:
                    ybn = 0.0
                    bar_alive[i] = False
                yb[i] = ybn
            eh = y[i] * y[i] - yh[i] * yh[i]
            eb = y[i] * y[i] - yb[i] * yb[i]
            if eh > max_eh:
                max_eh = eh
            if eb > max_eb:
                max_eb = eb
        t = t + dt
        steps += 1
        if x_absorbed:
            break
    return max_eh, max_eb, min_margin, t, x_absorbed
