"""Competitive Feller diffusions absorbed at the coordinate axes.

The process solves dX^i = sqrt(gamma_i X^i) dB^i + X^i r_i(X) dt on the
positive orthant, with the Lotka-Volterra drift r_i(x) = r_i - sum_j c_ij x_j
as the closed-form special case.  The module carries the full verification
chain for the drift-pair construction: the piecewise h_beta and g builders
with their convexity threshold M, automatic selection of the per-capita
bound constants (a, eta, B_a, C_a, D_a), grid certificates for the two
drift conditions, a Monte Carlo survival bound, and a shared-noise coupling
against the two dominating diffusions.

All drift-condition algebra runs in the coordinates z_i = 2 x_i / gamma_i,
where the diffusion coefficient is 2 and the generator reads
sum_i z_i rtilde_i(z) d_i + z_i d_i^2 with rtilde_i(z) = r_i(gamma z / 2).
Certificates report boxes in original units.  Because the selected beta is
typically large, products of h_beta underflow far from the origin, so the
condition checks work with the ratios h'/h, h''/h and log-values throughout.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _feller_kernels
from .core.rng import RngStream
from .lyapunov import CheckCertificate, LyapunovPair
from .stats import wilson_interval

__all__ = [
    "FellerModel",
    "FellerAssumptionParams",
    "HBetaFunction",
    "GFunction",
    "MConstants",
    "feller_generator_apply",
    "simulate_feller_step",
    "compute_M",
    "select_feller_beta",
    "build_h_beta",
    "build_g",
    "feller_lyapunov_V",
    "feller_lyapunov_phi",
    "feller_epsilon",
    "build_feller_pair",
    "auto_feller_params",
    "check_assumption_feller",
    "condition_grid",
    "check_feller_conditions",
    "survival_bound_check",
    "coupled_comparison",
]


@dataclass(frozen=True, eq=False)
class FellerModel:
    """Immutable competitive Feller diffusion on the positive orthant.

    ``lv`` holds the (r, c) arrays of the Lotka-Volterra drift when
    available; simulation then runs through the jitted Euler kernels and the
    automatic assumption constants become available.  Generic models supply
    a vectorized growth-rate callable instead.  ``dt`` is the base Euler
    step, halved whenever the smallest coordinate sits below 10*dt, and
    ``eps_abs`` is the absorption floor: a coordinate landing at or below it
    is set to exactly zero and the whole state freezes.
    """

    name: str
    dimension: int
    gamma: np.ndarray
    r_fn: Callable | None = field(default=None, repr=False)
    lv: tuple | None = None
    dt: float = 1e-3
    eps_abs: float = 1e-10

    def __post_init__(self) -> None:
        if self.dimension < 2:
            raise ValueError("dimension must be at least 2")
        gamma = np.ascontiguousarray(np.ravel(self.gamma), dtype=np.float64)
        if gamma.shape != (self.dimension,) or not (gamma > 0).all():
            raise ValueError("gamma must be a vector of d positive reals")
        object.__setattr__(self, "gamma", gamma)
        if self.lv is None and self.r_fn is None:
            raise ValueError("either the LV arrays or a growth-rate callable is required")
        if not (0 < self.dt and 0 < self.eps_abs < 1):
            raise ValueError("dt must be positive and eps_abs in (0, 1)")
        if self.lv is not None:
            r, c = self.lv
            r = np.ascontiguousarray(np.ravel(r), dtype=np.float64)
            c = np.ascontiguousarray(c, dtype=np.float64)
            d = self.dimension
            if r.shape != (d,) or c.shape != (d, d):
                raise ValueError("LV arrays must have shapes (d,) and (d, d)")
            if (c < 0).any() or (np.diag(c) <= 0).any():
                raise ValueError("competition matrix needs c_ij >= 0 and c_ii > 0")
            object.__setattr__(self, "lv", (r, c))

    @property
    def state_dtype(self) -> np.dtype:
        return np.dtype(np.float64)

    @classmethod
    def lotka_volterra(cls, r, c, gamma=None, name: str = "lv_feller",
                       dt: float = 1e-3, eps_abs: float = 1e-10) -> "FellerModel":
        """Model with drift r_i - sum_j c_ij x_j; gamma defaults to all twos."""
        r = np.ascontiguousarray(np.ravel(r), dtype=np.float64)
        d = r.shape[0]
        if gamma is None:
            gamma = np.full(d, 2.0)
        return cls(name=name, dimension=d, gamma=gamma, lv=(r, c),
                   dt=dt, eps_abs=eps_abs)

    @classmethod
    def from_growth_rate(cls, dimension: int, gamma, r_fn: Callable,
                         name: str = "custom_feller", dt: float = 1e-3,
                         eps_abs: float = 1e-10) -> "FellerModel":
        def checked(states):
            states = np.atleast_2d(np.asarray(states, dtype=np.float64))
            out = np.asarray(r_fn(states), dtype=np.float64)
            if out.shape != states.shape:
                raise ValueError(
                    f"growth rate returned shape {out.shape} for states {states.shape}")
            return out

        return cls(name=name, dimension=dimension, gamma=gamma, r_fn=checked,
                   dt=dt, eps_abs=eps_abs)

    # -- drift and state predicates -----------------------------------------

    def r_eval(self, states: np.ndarray) -> np.ndarray:
        """Per-capita growth rates, one row per state."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if self.lv is not None:
            r, c = self.lv
            return r[None, :] - states @ c.T
        return self.r_fn(states)

    def is_absorbed(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return (states <= 0).any(axis=1)

    def _require_interior(self, x0) -> np.ndarray:
        x0 = np.ascontiguousarray(np.ravel(x0), dtype=np.float64)
        if x0.shape != (self.dimension,):
            raise ValueError(f"state has shape {x0.shape}, model dimension is {self.dimension}")
        if bool((x0 <= 0).any()):
            raise ValueError(f"state {tuple(x0.tolist())} touches the boundary")
        return x0

    def with_dt(self, dt: float) -> "FellerModel":
        """Copy of the model with a different base Euler step."""
        return dataclasses.replace(self, dt=float(dt))

    # -- trajectory drivers -------------------------------------------------

    def simulate_one(self, state0, times, horizon, max_steps, gen):
        x0 = np.ascontiguousarray(state0, dtype=np.float64)
        times = np.ascontiguousarray(times, dtype=np.float64)
        if self.lv is not None:
            r, c = self.lv
            return _feller_kernels.feller_em_path(
                gen, x0, self.gamma, r, c, times, float(horizon),
                self.dt, self.eps_abs, int(max_steps))
        return self._py_em_path(x0, times, float(horizon), int(max_steps), gen)

    def _py_em_path(self, x0, times, horizon, max_steps, gen):
        d = self.dimension
        T = times.shape[0]
        x = x0.copy()
        out = np.zeros((T, d))
        flags = np.zeros(T, dtype=bool)
        t, gi, steps = 0.0, 0, 0
        absorbed, tau, guard = False, math.inf, False
        while True:
            if absorbed:
                out[gi:] = x
                flags[gi:] = True
                break
            dt = 0.5 * self.dt if x.min() < 10.0 * self.dt else self.dt
            tn = t + dt
            while gi < T and times[gi] < tn:
                out[gi] = x
                gi += 1
            if gi >= T or tn > horizon:
                break
            x, absorbed = self._py_step(x, tn - t, gen)
            if absorbed:
                tau = tn
            t = tn
            steps += 1
            if steps >= max_steps and not absorbed:
                guard = True
                out[gi:] = x
                break
        return out, flags, tau, guard

    def _py_step(self, x, dt, gen):
        r = self.r_eval(x[None, :])[0]
        var = np.clip(self.gamma * x * dt, 0.0, None)
        nxt = x + x * r * dt + np.sqrt(var) * gen.standard_normal(self.dimension)
        hit = nxt <= self.eps_abs
        if hit.any():
            nxt[hit] = 0.0
            return nxt, True
        return nxt, False

    def sample_absorption_times(self, x0, n, horizon, max_steps, stream: RngStream) -> np.ndarray:
        """Absorption times of n independent trajectories; inf when censored."""
        x0 = self._require_interior(x0)
        out = np.empty(n)
        for i in range(int(n)):
            gen = stream.child(i).generator()
            if self.lv is not None:
                r, c = self.lv
                tau, _ = _feller_kernels.feller_absorption_time(
                    gen, x0, self.gamma, r, c, float(horizon),
                    self.dt, self.eps_abs, int(max_steps))
            else:
                tau = self._py_absorption_time(x0, float(horizon), int(max_steps), gen)
            out[i] = tau
        return out

    def _py_absorption_time(self, x0, horizon, max_steps, gen) -> float:
        x = x0.copy()
        t, steps = 0.0, 0
        while True:
            dt = 0.5 * self.dt if x.min() < 10.0 * self.dt else self.dt
            if t + dt > horizon:
                return math.inf
            x, absorbed = self._py_step(x, dt, gen)
            if absorbed:
                return t + dt
            t += dt
            steps += 1
            if steps >= max_steps:
                return math.inf

    def fv_epoch(self, state, epoch_len, snapshot, self_idx, max_steps, gen):
        """Advance one interacting particle through a synchronization epoch."""
        if self.lv is not None:
            r, c = self.lv
            return _feller_kernels.feller_fv_epoch(
                gen, state, float(epoch_len), snapshot, int(self_idx),
                self.gamma, r, c, self.dt, self.eps_abs, int(max_steps))
        return self._py_fv_epoch(state, float(epoch_len), snapshot,
                                 int(self_idx), int(max_steps), gen)

    def _py_fv_epoch(self, state, epoch_len, snapshot, self_idx, max_steps, gen):
        x = np.array(state, dtype=np.float64)
        n_part = snapshot.shape[0]
        t, steps, count = 0.0, 0, 0
        while t < epoch_len:
            dt = 0.5 * self.dt if x.min() < 10.0 * self.dt else self.dt
            dt = min(dt, epoch_len - t)
            if dt <= 0.0:
                break
            x, absorbed = self._py_step(x, dt, gen)
            if absorbed:
                pick = int(gen.random() * (n_part - 1))
                pick = min(pick, n_part - 2)
                j = pick if pick < self_idx else pick + 1
                x = snapshot[j].astype(np.float64).copy()
                count += 1
            t += dt
            steps += 1
            if steps >= max_steps:
                return x, count, True
        return x, count, False

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        if self.lv is None:
            raise ValueError("only LV-parameterized diffusions serialize to JSON")
        r, c = self.lv
        return {
            "name": self.name,
            "dimension": self.dimension,
            "gamma": self.gamma.tolist(),
            "lv": {"r": r.tolist(), "c": c.tolist()},
            "scheme": {"dt": self.dt, "eps_abs": self.eps_abs},
        }

    @classmethod
    def from_json_dict(cls, block: dict) -> "FellerModel":
        scheme = block.get("scheme", {})
        return cls.lotka_volterra(
            block["lv"]["r"], block["lv"]["c"], gamma=block.get("gamma"),
            name=block.get("name", "lv_feller"),
            dt=float(scheme.get("dt", 1e-3)),
            eps_abs=float(scheme.get("eps_abs", 1e-10)))


@dataclass(frozen=True)
class FellerAssumptionParams:
    """Constants of the per-capita drift bounds, in normalized coordinates.

    The bounds read r_i(x) <= a^eta - x_i^eta everywhere, and
    sum over {x_i >= B_a} of r_i(x) <= C_a (sum over {x_i <= a} of r_i(x)
    + D_a); both are stated for the coordinates z = 2x/gamma in which the
    diffusion coefficient is 2.
    """

    a: float
    eta: float
    B_a: float
    C_a: float
    D_a: float

    def __post_init__(self) -> None:
        if not (self.a > 0 and 0 < self.eta < 1):
            raise ValueError("need a > 0 and eta in (0, 1)")
        if not self.B_a > self.a:
            raise ValueError("need B_a > a")
        if not (self.C_a > 0 and self.D_a > 0):
            raise ValueError("need C_a > 0 and D_a > 0")


# -- the piecewise h_beta construction --------------------------------------


def _smoothstep(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quintic smoothstep on [0, 1] with its first two derivatives in t."""
    w = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    wp = 30.0 * t * t * (t - 1.0) * (t - 1.0)
    wpp = 60.0 * t * (t - 1.0) * (2.0 * t - 1.0)
    return w, wp, wpp


@dataclass(frozen=True)
class MConstants:
    """Convexity threshold of the quartic cap with the derivative bounds.

    M is the smallest beta on the bisection grid with C_beta > 0 (which
    forces the cap decreasing and convex left of B_a); M_prime and
    M_double_prime are the suprema of |h_beta'| and |h_beta''| over
    [a/2, a] and beta in [M, beta_max], taken over a dense grid.
    """

    M: float
    M_prime: float
    M_double_prime: float
    grid_step: float


@dataclass(frozen=True)
class HBetaFunction:
    """Four-piece decreasing Lyapunov profile.

    Quadratic 4x^2/a^2 up to a/2, smoothstep blend with the quartic cap P2
    on [a/2, a], P2 itself on [a, B_a], then the power tail
    B_a^beta (2x)^-beta.  P2 is stored through its coefficients in powers
    of (x - B_a): p0 + p1 u + p2 u^2 + C_beta u^4.
    """

    a: float
    B_a: float
    beta: float
    p: tuple
    C_beta: float

    # -- quartic cap and its derivatives ------------------------------------

    def _p2(self, x):
        u = x - self.B_a
        p0, p1, p2, p4 = self.p
        return p0 + u * (p1 + u * p2) + p4 * u ** 4

    def _p2d1(self, x):
        u = x - self.B_a
        _, p1, p2, p4 = self.p
        return p1 + 2.0 * p2 * u + 4.0 * p4 * u ** 3

    def _p2d2(self, x):
        u = x - self.B_a
        _, _, p2, p4 = self.p
        return 2.0 * p2 + 12.0 * p4 * u * u

    def _masks(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x,
                x <= 0.5 * self.a,
                (x > 0.5 * self.a) & (x < self.a),
                (x >= self.a) & (x <= self.B_a),
                x > self.B_a)

    def _blend(self, x):
        """Value and two derivatives of the [a/2, a] piece."""
        t = 2.0 * x / self.a - 1.0
        w, wp, wpp = _smoothstep(t)
        wp *= 2.0 / self.a
        wpp *= (2.0 / self.a) ** 2
        q = 4.0 * x * x / (self.a * self.a)
        qp = 8.0 * x / (self.a * self.a)
        qpp = 8.0 / (self.a * self.a) * np.ones_like(x)
        p = self._p2(x)
        pp = self._p2d1(x)
        ppp = self._p2d2(x)
        val = q + w * (p - q)
        d1 = qp + wp * (p - q) + w * (pp - qp)
        d2 = qpp + wpp * (p - q) + 2.0 * wp * (pp - qp) + w * (ppp - qpp)
        return val, d1, d2

    # -- public evaluation --------------------------------------------------

    def value(self, x):
        x, quad, blend, mid, tail = self._masks(x)
        out = np.empty_like(x)
        out[quad] = 4.0 * x[quad] ** 2 / self.a ** 2
        if blend.any():
            out[blend] = self._blend(x[blend])[0]
        out[mid] = self._p2(x[mid])
        if tail.any():
            out[tail] = np.exp(self.beta * (np.log(self.B_a) - np.log(2.0 * x[tail])))
        return out if out.ndim else float(out)

    def d1(self, x):
        x, quad, blend, mid, tail = self._masks(x)
        out = np.empty_like(x)
        out[quad] = 8.0 * x[quad] / self.a ** 2
        if blend.any():
            out[blend] = self._blend(x[blend])[1]
        out[mid] = self._p2d1(x[mid])
        if tail.any():
            out[tail] = -self.beta / x[tail] * np.exp(
                self.beta * (np.log(self.B_a) - np.log(2.0 * x[tail])))
        return out if out.ndim else float(out)

    def d2(self, x):
        x, quad, blend, mid, tail = self._masks(x)
        out = np.empty_like(x)
        out[quad] = 8.0 / self.a ** 2
        if blend.any():
            out[blend] = self._blend(x[blend])[2]
        out[mid] = self._p2d2(x[mid])
        if tail.any():
            out[tail] = self.beta * (self.beta + 1.0) / x[tail] ** 2 * np.exp(
                self.beta * (np.log(self.B_a) - np.log(2.0 * x[tail])))
        return out if out.ndim else float(out)

    def ratio1(self, x):
        """h'/h, with the exact closed forms on the quadratic and tail pieces."""
        x, quad, blend, mid, tail = self._masks(x)
        out = np.empty_like(x)
        out[quad] = 2.0 / x[quad]
        if blend.any():
            v, d1, _ = self._blend(x[blend])
            out[blend] = d1 / v
        vm = self._p2(x[mid])
        out[mid] = self._p2d1(x[mid]) / vm
        out[tail] = -self.beta / x[tail]
        return out if out.ndim else float(out)

    def ratio2(self, x):
        """h''/h on the same piecewise-exact basis."""
        x, quad, blend, mid, tail = self._masks(x)
        out = np.empty_like(x)
        out[quad] = 2.0 / x[quad] ** 2
        if blend.any():
            v, _, d2 = self._blend(x[blend])
            out[blend] = d2 / v
        vm = self._p2(x[mid])
        out[mid] = self._p2d2(x[mid]) / vm
        out[tail] = self.beta * (self.beta + 1.0) / x[tail] ** 2
        return out if out.ndim else float(out)

    def log_value(self, x):
        """log h, finite on (0, inf) even where the tail product underflows."""
        x, quad, blend, mid, tail = self._masks(x)
        out = np.full_like(x, -np.inf)
        pos = quad & (x > 0)
        out[pos] = np.log(4.0) + 2.0 * np.log(x[pos]) - 2.0 * np.log(self.a)
        if blend.any():
            out[blend] = np.log(self._blend(x[blend])[0])
        out[mid] = np.log(self._p2(x[mid]))
        out[tail] = self.beta * (np.log(self.B_a) - np.log(2.0 * x[tail]))
        return out if out.ndim else float(out)

    def junction_mismatches(self) -> np.ndarray:
        """Relative value/d1/d2 gaps across the three junctions, shape (3, 3)."""
        out = np.empty((3, 3))
        xs = np.array([0.5 * self.a, self.a, self.B_a])
        quad = (lambda x: 4 * x * x / self.a ** 2,
                lambda x: 8 * x / self.a ** 2,
                lambda x: 8 / self.a ** 2)
        blend = (lambda x: self._blend(np.atleast_1d(x))[0][0],
                 lambda x: self._blend(np.atleast_1d(x))[1][0],
                 lambda x: self._blend(np.atleast_1d(x))[2][0])
        mid = (self._p2, self._p2d1, self._p2d2)
        tail = (lambda x: (self.B_a / (2 * x)) ** self.beta,
                lambda x: -self.beta / x * (self.B_a / (2 * x)) ** self.beta,
                lambda x: self.beta * (self.beta + 1) / x ** 2
                * (self.B_a / (2 * x)) ** self.beta)
        pairs = [(quad, blend), (blend, mid), (mid, tail)]
        for row, (x, (left, right)) in enumerate(zip(xs, pairs)):
            for k in range(3):
                lv, rv = float(left[k](x)), float(right[k](x))
                out[row, k] = abs(lv - rv) / max(1.0, abs(lv), abs(rv))
        return out

    def to_json_dict(self) -> dict:
        return {"a": self.a, "B_a": self.B_a, "beta": self.beta,
                "p2_coeffs": list(self.p), "C_beta": self.C_beta}


def _c_beta(a: float, B_a: float, beta: float) -> float:
    """Leading quartic coefficient forcing P2(a) = 1."""
    p0 = 2.0 ** (-beta)
    u = a / B_a - 1.0
    num = 1.0 - p0 + beta * p0 * u - 0.5 * beta * (beta + 1.0) * p0 * u * u
    return num / (a - B_a) ** 4


def _assemble_h(a: float, B_a: float, beta: float) -> HBetaFunction:
    p0 = 2.0 ** (-beta)
    p1 = -beta * p0 / B_a
    p2 = 0.5 * beta * (beta + 1.0) * p0 / (B_a * B_a)
    c4 = _c_beta(a, B_a, beta)
    return HBetaFunction(a=a, B_a=B_a, beta=beta, p=(p0, p1, p2, c4), C_beta=c4)


def compute_M(params: FellerAssumptionParams, beta_max: float | None = None,
              grid_step: float = 1e-3) -> MConstants:
    """Convexity threshold of the quartic cap with derivative suprema.

    Scans C_beta over a uniform grid up to 64, bisects the last sign change
    to 1e-10, and returns the grid floor when C_beta is positive throughout
    (the cap degenerates to zero slope at beta = 0, so no positive beta is
    excluded there).  The suprema M_prime, M_double_prime run over a dense
    beta grid on [M, beta_max] and 1200 points of [a/2, a].
    """
    a, B_a = params.a, params.B_a
    grid = np.arange(grid_step, 64.0 + grid_step, grid_step)
    pos = _c_beta(a, B_a, grid) > 0
    if pos.all():
        M = grid_step
    else:
        last = int(np.nonzero(~pos)[0][-1])
        lo, hi = grid[last], grid[last + 1]
        while hi - lo > 1e-10:
            midp = 0.5 * (lo + hi)
            if _c_beta(a, B_a, midp) > 0:
                hi = midp
            else:
                lo = midp
        M = hi
    if beta_max is None:
        beta_max = M + 40.0
    betas = np.linspace(M, beta_max, 41)
    xs = np.linspace(0.5 * a, a, 1200)
    m1 = m2 = 0.0
    for b in betas:
        h = _assemble_h(a, B_a, b)
        m1 = max(m1, float(np.abs(h.d1(xs)).max()))
        m2 = max(m2, float(np.abs(h.d2(xs)).max()))
    return MConstants(M=M, M_prime=m1, M_double_prime=m2, grid_step=grid_step)


def select_feller_beta(params: FellerAssumptionParams,
                       m: MConstants | None = None) -> float:
    """The tail exponent M + max(2, a*M') / C_a + 1."""
    mc = m if m is not None else compute_M(params)
    return mc.M + max(2.0, params.a * mc.M_prime) / params.C_a + 1.0


def build_h_beta(params: FellerAssumptionParams, beta: float,
                 m: MConstants | None = None) -> HBetaFunction:
    """Assemble the four-piece profile, refusing betas below the threshold."""
    mc = m if m is not None else compute_M(params)
    if beta < mc.M or _c_beta(params.a, params.B_a, beta) <= 0:
        raise ValueError(
            f"beta={beta:g} sits below the convexity threshold M={mc.M:g}: "
            "C_beta <= 0 breaks monotonicity and convexity of the cap")
    return _assemble_h(params.a, params.B_a, beta)


# -- the increasing concave g ----------------------------------------------


@dataclass(frozen=True)
class GFunction:
    """Three-piece increasing concave profile vanishing at zero.

    Power x^gamma_exp up to 1, a quintic interpolant on [1, 2] stored in
    powers of (x - 1), then the shifted tail delta - x^(-eta/2).
    """

    gamma_exp: float
    eta: float
    delta: float
    coeffs: tuple

    def _masks(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x,
                x <= 0.0,
                (x > 0.0) & (x <= 1.0),
                (x > 1.0) & (x < 2.0),
                x >= 2.0)

    def _poly(self, x, order: int):
        u = x - 1.0
        c = self.coeffs
        if order == 0:
            out = np.zeros_like(u)
            for k in range(5, -1, -1):
                out = out * u + c[k]
            return out
        if order == 1:
            out = np.zeros_like(u)
            for k in range(5, 0, -1):
                out = out * u + k * c[k]
            return out
        out = np.zeros_like(u)
        for k in range(5, 1, -1):
            out = out * u + k * (k - 1) * c[k]
        return out

    def value(self, x):
        x, zero, low, mid, tail = self._masks(x)
        out = np.zeros_like(x)
        out[low] = x[low] ** self.gamma_exp
        out[mid] = self._poly(x[mid], 0)
        out[tail] = self.delta - x[tail] ** (-0.5 * self.eta)
        return out if out.ndim else float(out)

    def d1(self, x):
        x, zero, low, mid, tail = self._masks(x)
        out = np.zeros_like(x)
        out[low] = self.gamma_exp * x[low] ** (self.gamma_exp - 1.0)
        out[mid] = self._poly(x[mid], 1)
        out[tail] = 0.5 * self.eta * x[tail] ** (-0.5 * self.eta - 1.0)
        return out if out.ndim else float(out)

    def d2(self, x):
        x, zero, low, mid, tail = self._masks(x)
        out = np.zeros_like(x)
        g = self.gamma_exp
        out[low] = g * (g - 1.0) * x[low] ** (g - 2.0)
        out[mid] = self._poly(x[mid], 2)
        out[tail] = -0.5 * self.eta * (0.5 * self.eta + 1.0) \
            * x[tail] ** (-0.5 * self.eta - 2.0)
        return out if out.ndim else float(out)

    def ratio1(self, x):
        """g'/g with the exact closed form on the power piece."""
        x, zero, low, mid, tail = self._masks(x)
        out = np.zeros_like(x)
        out[low] = self.gamma_exp / x[low]
        out[mid] = self._poly(x[mid], 1) / self._poly(x[mid], 0)
        vt = self.delta - x[tail] ** (-0.5 * self.eta)
        out[tail] = 0.5 * self.eta * x[tail] ** (-0.5 * self.eta - 1.0) / vt
        return out if out.ndim else float(out)

    def ratio2(self, x):
        x, zero, low, mid, tail = self._masks(x)
        out = np.zeros_like(x)
        g = self.gamma_exp
        out[low] = g * (g - 1.0) / x[low] ** 2
        out[mid] = self._poly(x[mid], 2) / self._poly(x[mid], 0)
        vt = self.delta - x[tail] ** (-0.5 * self.eta)
        out[tail] = -0.5 * self.eta * (0.5 * self.eta + 1.0) \
            * x[tail] ** (-0.5 * self.eta - 2.0) / vt
        return out if out.ndim else float(out)

    def log_value(self, x):
        x, zero, low, mid, tail = self._masks(x)
        out = np.full_like(x, -np.inf)
        out[low] = self.gamma_exp * np.log(x[low])
        out[mid] = np.log(self._poly(x[mid], 0))
        out[tail] = np.log(self.delta - x[tail] ** (-0.5 * self.eta))
        return out if out.ndim else float(out)

    def junction_mismatches(self) -> np.ndarray:
        """Relative value/d1/d2 gaps at x = 1 and x = 2, shape (2, 3)."""
        out = np.empty((2, 3))
        g, e, d = self.gamma_exp, self.eta, self.delta
        low = (lambda x: x ** g, lambda x: g * x ** (g - 1),
               lambda x: g * (g - 1) * x ** (g - 2))
        mid = (lambda x: float(self._poly(np.atleast_1d(x), 0)[0]),
               lambda x: float(self._poly(np.atleast_1d(x), 1)[0]),
               lambda x: float(self._poly(np.atleast_1d(x), 2)[0]))
        tail = (lambda x: d - x ** (-e / 2),
                lambda x: e / 2 * x ** (-e / 2 - 1),
                lambda x: -e / 2 * (e / 2 + 1) * x ** (-e / 2 - 2))
        for row, (x, (left, right)) in enumerate(zip((1.0, 2.0),
                                                     [(low, mid), (mid, tail)])):
            for k in range(3):
                lv, rv = float(left[k](x)), float(right[k](x))
                out[row, k] = abs(lv - rv) / max(1.0, abs(lv), abs(rv))
        return out

    def to_json_dict(self) -> dict:
        return {"gamma_exp": self.gamma_exp, "eta": self.eta,
                "delta": self.delta, "coeffs": list(self.coeffs)}


def build_g(params: FellerAssumptionParams,
            gamma_exp: float | None = None) -> GFunction:
    """Fit the middle quintic so g stays increasing and concave.

    delta fixes the chord slope over [1, 2]; the default puts it midway
    between the endpoint slopes g'(1) = gamma_exp and g'(2) = eta 2^(-2-eta/2),
    and on a failed grid check the chord is nudged through a short schedule
    of interpolation weights before giving up.
    """
    eta = params.eta
    s2 = eta * 2.0 ** (-2.0 - 0.5 * eta)
    if gamma_exp is None:
        gamma_exp = 0.5 * (s2 + 1.0)
    if not s2 < gamma_exp < 1.0:
        raise ValueError(
            f"gamma_exp={gamma_exp:g} outside ({s2:g}, 1): the power piece "
            "cannot meet the tail slope monotonically")
    s1 = gamma_exp
    m2 = -0.5 * eta * (0.5 * eta + 1.0) * 2.0 ** (-0.5 * eta - 2.0)
    worst = ""
    for t in (0.5, 0.4, 0.6, 0.3, 0.7, 0.45, 0.55, 0.35, 0.65):
        chord = s2 + t * (s1 - s2)
        delta = 1.0 + 2.0 ** (-0.5 * eta) + chord
        c0, c1, c2 = 1.0, s1, 0.5 * s1 * (s1 - 1.0)
        v2 = delta - 2.0 ** (-0.5 * eta)
        rhs = np.array([v2 - c0 - c1 - c2, s2 - c1 - 2.0 * c2, m2 - 2.0 * c2])
        A = np.array([[1.0, 1.0, 1.0], [3.0, 4.0, 5.0], [6.0, 12.0, 20.0]])
        c3, c4, c5 = np.linalg.solve(A, rhs)
        cand = GFunction(gamma_exp=gamma_exp, eta=eta, delta=delta,
                         coeffs=(c0, c1, c2, float(c3), float(c4), float(c5)))
        xs = np.linspace(1.0, 2.0, 10**4)
        d1 = cand._poly(xs, 1)
        d2 = cand._poly(xs, 2)
        if d1.min() > 0 and d2.max() <= 1e-12:
            return cand
        bad = int(np.argmin(d1)) if d1.min() <= 0 else int(np.argmax(d2))
        worst = (f"g'({xs[bad]:.4f})={d1[bad]:.3e}, g''({xs[bad]:.4f})={d2[bad]:.3e} "
                 f"at delta={delta:g}")
    raise ValueError(
        f"no admissible delta keeps the quintic increasing and concave ({worst})")


# -- products and drift conditions ------------------------------------------


def feller_lyapunov_V(g: GFunction, x):
    """Product of the concave profile over the coordinates."""
    vals = g.value(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    out = np.prod(vals, axis=-1)
    return out if np.ndim(x) > 1 else float(out[0])


def feller_lyapunov_phi(h: HBetaFunction, x):
    """Product of the decreasing profile over the coordinates."""
    vals = h.value(np.atleast_2d(np.asarray(x, dtype=np.float64)))
    out = np.prod(vals, axis=-1)
    return out if np.ndim(x) > 1 else float(out[0])


def feller_epsilon(params: FellerAssumptionParams, beta: float,
                   dimension: int) -> float:
    """Largest exponent comfortably inside beta*d*eps < eta/2, capped at 1/(4d)."""
    return min(0.99 * params.eta / (2.0 * beta * dimension),
               0.25 / dimension)


def _normalized_states(model: FellerModel, x: np.ndarray) -> np.ndarray:
    return 2.0 * x / model.gamma[None, :]


def _original_states(model: FellerModel, z: np.ndarray) -> np.ndarray:
    return 0.5 * z * model.gamma[None, :]


def _product_images(model: FellerModel, fn, states: np.ndarray) -> np.ndarray:
    """Generator image of prod_i fn(z_i), z = 2x/gamma, at interior rows.

    In the normalized coordinates the generator is
    sum_i z_i rtilde_i d_i + z_i d_i^2, so the image equals
    sum_i [z_i rtilde_i fn'(z_i) + z_i fn''(z_i)] prod_{j != i} fn(z_j).
    Rows touching the boundary map to zero.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    out = np.zeros(states.shape[0])
    alive = ~model.is_absorbed(states)
    if not alive.any():
        return out
    x = states[alive]
    z = _normalized_states(model, x)
    rt = model.r_eval(x)
    vals = fn.value(z)
    d1 = fn.d1(z)
    d2 = fn.d2(z)
    prod = np.prod(vals, axis=1)
    loo = prod[:, None] / vals
    out[alive] = np.sum((z * rt * d1 + z * d2) * loo, axis=1)
    return out


def build_feller_pair(model: FellerModel, params: FellerAssumptionParams,
                      h: HBetaFunction, g: GFunction,
                      epsilon: float | None = None) -> LyapunovPair:
    """Bundle the two products with their exact generator images.

    The images use the leave-one-out product form and are meant for states
    of moderate size (samples, truncation boxes); condition certificates on
    wide grids go through check_feller_conditions, which works in ratio and
    log form and survives the tail underflow of the products.
    """
    if epsilon is None:
        epsilon = feller_epsilon(params, h.beta, model.dimension)

    def V(states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return np.prod(g.value(_normalized_states(model, states)), axis=-1)

    def phi(states):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        return np.prod(h.value(_normalized_states(model, states)), axis=-1)

    def LV(states):
        return _product_images(model, g, states)

    def Lphi(states):
        return _product_images(model, h, states)

    return LyapunovPair(
        name=f"feller_product[{model.name}]",
        epsilon=float(epsilon),
        V=V, phi=phi, LV=LV, Lphi=Lphi,
        meta={"model": model.name, "beta": h.beta, "a": params.a,
              "B_a": params.B_a, "eta": params.eta,
              "gamma_exp": g.gamma_exp, "delta": g.delta,
              "epsilon": float(epsilon)})


# -- generator and single steps ---------------------------------------------


def _fd_grad_hess(f: Callable, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d = x.shape[0]
    grad = np.empty(d)
    hess = np.empty(d)
    f0 = float(f(x))
    for i in range(d):
        hstep = 1e-5 * max(1.0, abs(x[i]))
        e = np.zeros(d)
        e[i] = hstep
        fp, fm = float(f(x + e)), float(f(x - e))
        grad[i] = (fp - fm) / (2.0 * hstep)
        hess[i] = (fp - 2.0 * f0 + fm) / (hstep * hstep)
    return grad, hess


def feller_generator_apply(model: FellerModel, f, x) -> float:
    """Ito generator sum_i x_i r_i(x) d_i f + (gamma_i x_i / 2) d_i^2 f.

    ``f`` either exposes grad/hess_diag methods or is a plain callable, in
    which case central finite differences supply the partials (exact for
    affine functions).
    """
    x = np.ascontiguousarray(np.ravel(x), dtype=np.float64)
    if x.shape != (model.dimension,):
        raise ValueError(f"state has shape {x.shape}, model dimension is {model.dimension}")
    if bool((x <= 0).any()):
        raise ValueError("generator evaluated on the boundary")
    if hasattr(f, "grad") and hasattr(f, "hess_diag"):
        grad = np.asarray(f.grad(x), dtype=np.float64)
        hess = np.asarray(f.hess_diag(x), dtype=np.float64)
    else:
        grad, hess = _fd_grad_hess(f, x)
    r = model.r_eval(x[None, :])[0]
    return float(np.sum(x * r * grad) + np.sum(0.5 * model.gamma * x * hess))


def simulate_feller_step(model: FellerModel, x, dt: float, rng) -> np.ndarray:
    """One full-truncation Euler step of length dt.

    The diffusion argument is clamped at zero and any coordinate landing at
    or below eps_abs is set to exactly zero, leaving an absorbed state.
    ``rng`` is an RngStream (fresh generator per call) or a Generator to be
    advanced across repeated calls.
    """
    x = np.ascontiguousarray(np.ravel(x), dtype=np.float64)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    nxt, _ = model._py_step(x, float(dt), gen)
    return nxt


# -- automatic assumption constants -----------------------------------------


def _normalized_lv(model: FellerModel) -> tuple[np.ndarray, np.ndarray]:
    if model.lv is None:
        raise ValueError("closed-form constants need the LV parameterization")
    r, c = model.lv
    return r, c * (model.gamma[None, :] / 2.0)


def auto_feller_params(model: FellerModel, eta: float = 0.5) -> FellerAssumptionParams:
    """Constants making the per-capita bounds provable for the LV drift.

    a is minimal for r_i - c_ii z_i + z_i^eta <= a^eta (the off-diagonal
    competition only helps), attained at z_i = (eta/c_ii)^(1/(1-eta)).
    B_a doubles both a and the single-species equilibria, so coordinates
    above B_a certify strong self-limitation; C_a and D_a then make the
    large-versus-small rate comparison hold with margin: the left side is
    at most -min_i(c_ii)/2 times the large-coordinate mass S, while the
    bracket on the right is at least D_a - d c_max B_a - sum_i |r_i|
    - d c_max S.
    """
    r, c = _normalized_lv(model)
    d = model.dimension
    cd = np.diag(c)
    s = (1.0 - eta) * (eta / cd) ** (eta / (1.0 - eta))
    peak = float(np.max(r + s))
    a = max(peak, 1e-6) ** (1.0 / eta)
    B_a = max(2.0 * a, float(np.max(2.0 * np.clip(r, 0.0, None) / cd)))
    c_max = float(c.max())
    C_a = 0.9 * float(cd.min()) / (2.0 * d * c_max)
    D_a = 1.1 * (d * d * c_max * B_a + float(np.abs(r).sum())) + 1.0
    return FellerAssumptionParams(a=a, eta=eta, B_a=B_a, C_a=C_a, D_a=D_a)


def condition_grid(params: FellerAssumptionParams, dimension: int,
                   per_axis: int | None = None, lo: float = 1e-4) -> np.ndarray:
    """Log-uniform product grid over [lo, 10*B_a]^d in normalized coordinates.

    The default density (200 per axis for d = 2, 60 for d = 3) resolves
    both the 2/z blow-up near the boundary and the power growth at infinity.
    """
    if per_axis is None:
        per_axis = 200 if dimension == 2 else 60
    axis = np.geomspace(lo, 10.0 * params.B_a, per_axis)
    mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def check_assumption_feller(model: FellerModel, params: FellerAssumptionParams,
                            grid: np.ndarray | None = None,
                            tol: float = 1e-9) -> CheckCertificate:
    """Grid certificate for the two per-capita drift bounds.

    Checks r_i(z) + z_i^eta <= a^eta coordinatewise and the
    large-versus-small comparison with (C_a, D_a) at every grid state, in
    normalized coordinates.  For LV drifts the first bound also gets its
    closed-form margin at the per-coordinate maximizer.
    """
    if grid is None:
        grid = condition_grid(params, model.dimension)
    z = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    rt = model.r_eval(_original_states(model, z))
    a_pow = params.a ** params.eta
    margin1 = rt + z ** params.eta - a_pow
    big = z >= params.B_a
    small = z <= params.a
    lhs = np.sum(np.where(big, rt, 0.0), axis=1)
    rhs = params.C_a * (np.sum(np.where(small, rt, 0.0), axis=1) + params.D_a)
    margin3 = lhs - rhs
    worst1 = float(margin1.max())
    worst3 = float(margin3.max())
    witnesses = {
        "sup_percapita_margin": worst1,
        "argmax_percapita_z": z[np.unravel_index(margin1.argmax(), margin1.shape)[0]],
        "sup_rate_comparison_margin": worst3,
        "argmax_rate_comparison_z": z[margin3.argmax()],
        "a": params.a, "eta": params.eta, "B_a": params.B_a,
        "C_a": params.C_a, "D_a": params.D_a,
    }
    if model.lv is not None:
        r, c = _normalized_lv(model)
        cd = np.diag(c)
        eta = params.eta
        zstar = (eta / cd) ** (1.0 / (1.0 - eta))
        exact = r + (1.0 - eta) * (eta / cd) ** (eta / (1.0 - eta)) - a_pow
        witnesses["closed_form_percapita_margin"] = float(exact.max())
        witnesses["closed_form_maximizer_z"] = zstar
    bad = []
    if worst1 > tol:
        i, j = np.unravel_index(margin1.argmax(), margin1.shape)
        bad.append({"bound": "percapita", "z": z[i].tolist(),
                    "coordinate": int(j), "margin": worst1})
    if worst3 > tol:
        bad.append({"bound": "rate_comparison",
                    "z": z[margin3.argmax()].tolist(), "margin": worst3})
    return CheckCertificate(
        check="assumption_feller_drift",
        verdict="holds" if not bad else "violated",
        witnesses=witnesses,
        counterexamples=tuple(bad),
        domain=f"log-uniform grid [{z.min():g}, {z.max():g}]^{model.dimension}, "
               "normalized coordinates",
        qualifier="grid")


def check_feller_conditions(model: FellerModel, params: FellerAssumptionParams,
                            h: HBetaFunction, g: GFunction, epsilon: float,
                            grid: np.ndarray | None = None,
                            tol: float = 1e-9) -> CheckCertificate:
    """Locate the smallest box outside which both drift conditions hold.

    Condition (a) asks L(phi) >= 0 outside O_n = (1/(2n), 2n)^d, condition
    (b) asks L(V) + V^(1+eps)/phi^eps <= 0 there.  Both are evaluated in
    ratio form, dividing by phi and V respectively, so the wide grid never
    touches the product underflow.  The realized constants follow: C bounds
    (-L(phi))+ inside the box, C' is the largest factor on the penalty that
    still closes condition (b) outside, and C'' bounds
    ((L(V) + C' V^(1+eps)/phi^eps)/phi)+ everywhere, reported with its
    log10 when it overflows.
    """
    beta, eta, d = h.beta, params.eta, model.dimension
    if not beta * d * epsilon < 0.5 * eta:
        raise ValueError(
            f"epsilon={epsilon:g} violates beta*d*eps < eta/2 "
            f"(beta={beta:g}, d={d}, eta={eta:g})")
    if grid is None:
        grid = condition_grid(params, d)
    z = np.atleast_2d(np.asarray(grid, dtype=np.float64))
    if float(z.min()) <= model.eps_abs:
        raise ValueError("grid touches the boundary closer than eps_abs")
    x = _original_states(model, z)
    rt = model.r_eval(x)
    s_a = np.sum(z * (rt * h.ratio1(z) + h.ratio2(z)), axis=1)
    s_b = np.sum(z * (rt * g.ratio1(z) + g.ratio2(z)), axis=1)
    log_phi = np.sum(h.log_value(z), axis=1)
    log_V = np.sum(g.log_value(z), axis=1)
    pen_ratio = np.exp(epsilon * (log_V - log_phi))
    ok_a = s_a >= -tol
    ok_b = s_b + pen_ratio <= tol
    # candidate boxes stop where the grid still covers a band beyond 2n
    cap = max(1, int(float(z.max()) / 3.0))
    n_star = None
    for n in range(1, cap + 1):
        outside = (z < 1.0 / (2.0 * n)).any(axis=1) | (z > 2.0 * n).any(axis=1)
        if (ok_a | ~outside).all() and (ok_b | ~outside).all():
            n_star = n
            break
    axis_min = float(z[:, 0].min())
    edge = z[:, 0] <= axis_min * (1 + 1e-12)
    boundary_evidence = float(s_a[edge].min()) if edge.any() else math.nan
    if n_star is None:
        outside = (z < 1.0 / (2.0 * cap)).any(axis=1) | (z > 2.0 * cap).any(axis=1)
        bad = []
        for label, ok, margin in (("a", ok_a, -s_a), ("b", ok_b, s_b + pen_ratio)):
            viol = outside & ~ok
            if viol.any():
                order = np.argsort(margin[viol])[::-1][:5]
                zi = z[viol][order]
                for row, mg in zip(zi, margin[viol][order]):
                    bad.append({"condition": label, "z": row.tolist(),
                                "x": (0.5 * row * model.gamma).tolist(),
                                "margin": float(mg)})
        return CheckCertificate(
            check="feller_drift_conditions", verdict="violated",
            witnesses={"box_cap_n": cap, "epsilon": epsilon, "beta": beta,
                       "boundary_min_lphi_over_phi": boundary_evidence},
            counterexamples=tuple(bad),
            domain=f"log-uniform grid [{z.min():g}, {z.max():g}]^{d}, "
                   "normalized coordinates",
            qualifier="grid")
    outside = (z < 1.0 / (2.0 * n_star)).any(axis=1) | (z > 2.0 * n_star).any(axis=1)
    inside = ~outside
    with np.errstate(over="ignore"):
        lphi_inside = s_a[inside] * np.exp(log_phi[inside])
    C = float(np.clip(-lphi_inside, 0.0, None).max()) if inside.any() else 0.0
    c_prime = float(np.min(-s_b[outside] / pen_ratio[outside]))
    lhs = s_b + c_prime * pen_ratio
    pos = inside & (lhs > 0)
    if pos.any():
        log_c2 = float(np.max(np.log(lhs[pos]) + log_V[pos] - log_phi[pos]))
        with np.errstate(over="ignore"):
            c_double = float(np.exp(log_c2))
        c_double_log10 = log_c2 / math.log(10.0)
    else:
        c_double, c_double_log10 = 0.0, -math.inf
    box_lo = (model.gamma / (4.0 * n_star)).tolist()
    box_hi = (model.gamma * float(n_star)).tolist()
    return CheckCertificate(
        check="feller_drift_conditions", verdict="holds",
        witnesses={
            "n_star": n_star,
            "box_lo_original_units": box_lo,
            "box_hi_original_units": box_hi,
            "C": C, "C_prime": c_prime, "C_double_prime": c_double,
            "C_double_prime_log10": c_double_log10,
            "epsilon": epsilon, "beta": beta,
            "min_margin_a_outside": float(s_a[outside].min()),
            "max_margin_b_outside": float((s_b + pen_ratio)[outside].max()),
            "boundary_min_lphi_over_phi": boundary_evidence,
        },
        domain=f"log-uniform grid [{z.min():g}, {z.max():g}]^{d}, "
               "normalized coordinates",
        qualifier="grid")


# -- survival bound and pathwise comparison --------------------------------


def survival_bound_check(model: FellerModel, g: GFunction, r0: float,
                         states: np.ndarray, mc_budget: int,
                         stream: RngStream, max_steps: int = 10**7,
                         ci_width_max: float = 0.3) -> CheckCertificate:
    """Fit the smallest p0 with P_x(survive past r0) <= p0 V(x) on a grid.

    Each state gets mc_budget trajectories censored at r0, so survivors are
    exactly the censored ones; Wilson upper bounds then drive the fit.  A
    confidence interval wider than ci_width_max flags the certificate
    inconclusive instead of pretending precision.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    est = np.empty(states.shape[0])
    lo = np.empty(states.shape[0])
    hi = np.empty(states.shape[0])
    vv = np.empty(states.shape[0])
    for k, xk in enumerate(states):
        taus = model.sample_absorption_times(xk, mc_budget, r0, max_steps,
                                             stream.child(k))
        surv = int(np.sum(taus > r0))
        est[k] = surv / mc_budget
        lo[k], hi[k] = wilson_interval(surv, mc_budget)
        vv[k] = np.prod(g.value(_normalized_states(model, xk[None, :])))
    p0 = float(np.max(hi / vv))
    worst = int(np.argmax(hi / vv))
    witnesses = {
        "p0": p0, "r0": r0, "mc_budget": mc_budget,
        "binding_state": states[worst].tolist(),
        "estimates": est, "ci_lo": lo, "ci_hi": hi, "V": vv,
        "max_ci_width": float(np.max(hi - lo)),
    }
    if float(np.max(hi - lo)) > ci_width_max:
        return CheckCertificate(
            check="survival_dominated_by_V", verdict="inconclusive",
            witnesses=witnesses,
            domain=f"{states.shape[0]} near-boundary states",
            qualifier="monte-carlo")
    return CheckCertificate(
        check="survival_dominated_by_V", verdict="holds",
        witnesses=witnesses,
        domain=f"{states.shape[0]} near-boundary states",
        qualifier="monte-carlo")


def coupled_comparison(model: FellerModel, params: FellerAssumptionParams,
                       x0, n_paths: int, horizon: float, stream: RngStream,
                       dt: float | None = None, max_steps: int = 10**7,
                       tol: float = 1e-12) -> CheckCertificate:
    """Shared-noise domination by the linear and logistic diffusions.

    Runs the triplet coupling in normalized square-root coordinates, where
    the dominating Euler maps are monotone, and reports the largest excess
    of any coordinate of X over its linear-drift and logistic majorants at
    any step, together with the smallest monotonicity margin of the
    logistic map (positive margin certifies the stepwise order argument).
    """
    r, c = _normalized_lv(model)
    x0 = model._require_interior(x0)
    z0 = np.ascontiguousarray(2.0 * x0 / model.gamma)
    gamma_norm = np.full(model.dimension, 2.0)
    if dt is None:
        dt = model.dt
    a_pow = params.a ** params.eta
    worst_h = -math.inf
    worst_b = -math.inf
    min_margin = math.inf
    absorbed = 0
    t_total = 0.0
    for i in range(int(n_paths)):
        gen = stream.child(i).generator()
        eh, eb, mar, t_end, was_abs = _feller_kernels.feller_coupled_triplet(
            gen, z0, gamma_norm, r, c, a_pow, params.eta, float(horizon),
            float(dt), model.eps_abs, int(max_steps))
        worst_h = max(worst_h, eh)
        worst_b = max(worst_b, eb)
        min_margin = min(min_margin, mar)
        absorbed += int(was_abs)
        t_total += t_end
    ok = worst_h <= tol and worst_b <= tol and min_margin > 0
    witnesses = {
        "n_paths": int(n_paths), "dt": float(dt), "horizon": float(horizon),
        "worst_excess_linear": worst_h, "worst_excess_logistic": worst_b,
        "min_monotonicity_margin": min_margin,
        "absorbed_fraction": absorbed / n_paths,
        "mean_comparison_time": t_total / n_paths,
    }
    bad = ()
    if not ok:
        bad = ({"worst_excess_linear": worst_h,
                "worst_excess_logistic": worst_b,
                "min_monotonicity_margin": min_margin},)
    return CheckCertificate(
        check="pathwise_domination", verdict="holds" if ok else "violated",
        witnesses=witnesses, counterexamples=bad,
        domain=f"{n_paths} coupled paths from {tuple(x0.tolist())}",
        qualifier="coupled-paths", seed=stream.seed)
