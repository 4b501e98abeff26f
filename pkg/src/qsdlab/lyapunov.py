"""Drift pairs, certificates, and numerical checks of the survival criteria.

A LyapunovPair bundles bounded functions (V, phi) vanishing on the absorbing
set together with exact pointwise generator images supplied by the owning
model.  The checks in this module certify, on explicitly enumerated finite
domains or sampled measures, the inequalities that drive uniform conditional
ergodicity: admissibility of the pair, the localized positivity of -L phi
(condition a), the penalized drift bound on V (condition b), the nonlinear
measure-level inequality, and the integrated drift identity on exactly
solvable truncations.  Verdicts are always explicit about their evidence:
"holds" on the checked domain, "violated" with counterexamples, or
"inconclusive" when the budget cannot decide.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core.measures import EmpiricalMeasure
from .core.rng import RngStream
from .core.simulate import SimBatchConfig, TimeGrid, simulate_batch
from .stats import ols_line, wilson_interval
from .uniformization import BoxTruncation, SemigroupStepper

__all__ = [
    "LyapunovPair",
    "CheckCertificate",
    "DynkinResult",
    "check_admissible",
    "check_nonlinear_inequality",
    "check_condition_a",
    "check_condition_b",
    "verify_dynkin_identity",
    "doeblin_probe",
    "harnack_ratio_probe",
    "expo_moment_probe",
]

Verdict = str  # "holds" | "violated" | "inconclusive"
_VERDICTS = ("holds", "violated", "inconclusive")


@dataclass(frozen=True)
class LyapunovPair:
    """Candidate drift pair with exact generator images.

    V and phi take stacked states of shape (m, d) and return shape (m,)
    values, vanishing on the absorbing set; LV and Lphi are the exact
    pointwise generator images supplied by the model that built the pair.
    ``epsilon`` is the exponent used in the penalization V^(1+eps)/phi^eps.
    """

    name: str
    epsilon: float
    V: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    LV: Callable[[np.ndarray], np.ndarray]
    Lphi: Callable[[np.ndarray], np.ndarray]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be positive")

    def penalty(self, states: np.ndarray) -> np.ndarray:
        """Pointwise V^(1+eps) / phi^eps."""
        v = np.asarray(self.V(states), dtype=float)
        p = np.asarray(self.phi(states), dtype=float)
        return v ** (1.0 + self.epsilon) / p**self.epsilon


@dataclass(frozen=True)
class CheckCertificate:
    """Outcome of one numerical check.

    Verdicts mean: "holds" on the stated domain, "violated" with at least
    one counterexample attached, "inconclusive" when the evidence cannot
    decide either way.  ``qualifier`` records the nature of the evidence
    (exact enumeration, grid evaluation, empirical sampling).
    """

    check: str
    verdict: Verdict
    witnesses: dict
    counterexamples: tuple = ()
    domain: str = ""
    seed: int | None = None
    qualifier: str = "exact"

    def __post_init__(self) -> None:
        if self.verdict not in _VERDICTS:
            raise ValueError(f"verdict must be one of {_VERDICTS}, got {self.verdict!r}")
        if self.verdict == "violated" and not self.counterexamples:
            raise ValueError("a violated certificate must carry counterexamples")

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_json_dict(self) -> dict:
        return {
            "check": self.check,
            "verdict": self.verdict,
            "witnesses": _jsonable(self.witnesses),
            "counterexamples": _jsonable(list(self.counterexamples)),
            "domain": self.domain,
            "seed": self.seed,
            "qualifier": self.qualifier,
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json_dict(cls, payload: dict) -> "CheckCertificate":
        return cls(
            check=payload["check"],
            verdict=payload["verdict"],
            witnesses=payload["witnesses"],
            counterexamples=tuple(payload.get("counterexamples", ())),
            domain=payload.get("domain", ""),
            seed=payload.get("seed"),
            qualifier=payload.get("qualifier", "exact"),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


def check_admissible(
    pair: LyapunovPair,
    sample: np.ndarray,
    exit_value_paths: Sequence[np.ndarray] | None = None,
    growth_factor: float = 10.0,
    zero_tol: float = 1e-12,
) -> CheckCertificate:
    """Sample-based admissibility check for a drift pair.

    Args:
        pair: candidate pair.
        sample: states of shape (m, d) ordered so that later rows escape
            every localizing set (growing total mass, or a coordinate
            pushed toward the boundary in the continuous case).
        exit_value_paths: optional per-trajectory sequences of V evaluated
            at the successive exit times of the localizing sets; each
            sequence must decay to zero once the trajectory is absorbed.
        growth_factor: required growth of V/phi between the first and last
            decile of the escaping sample.
        zero_tol: threshold below which a pathwise V value counts as zero.
    """
    sample = np.atleast_2d(np.asarray(sample))
    dec0 = max(1, sample.shape[0] // 10)
    norms = np.abs(sample).max(axis=1).astype(float)
    mins = sample.min(axis=1).astype(float)
    grows = float(norms[-dec0:].mean()) >= 2.0 * float(norms[:dec0].mean())
    sinks = float(mins[-dec0:].mean()) <= 0.5 * max(float(mins[:dec0].mean()), 1e-300)
    if not (grows or sinks):
        raise ValueError(
            "sample does not escape the localizing sets "
            "(max-norm not growing and min-coordinate not vanishing)"
        )
    v = np.asarray(pair.V(sample), dtype=float)
    p = np.asarray(pair.phi(sample), dtype=float)
    lv = np.asarray(pair.LV(sample), dtype=float)
    lp = np.asarray(pair.Lphi(sample), dtype=float)

    failures: list[tuple] = []
    checks: dict[str, bool] = {}
    checks["V_positive"] = bool(np.all(v > 0.0))
    checks["phi_positive"] = bool(np.all(p > 0.0))
    checks["V_finite"] = bool(np.all(np.isfinite(v)))
    checks["phi_finite"] = bool(np.all(np.isfinite(p)))
    checks["LV_bounded_above"] = bool(np.isfinite(lv.max()))
    checks["Lphi_bounded_below"] = bool(np.isfinite(lp.min()))

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(p > 0.0, v / p, np.inf)
    checks["ratio_positive"] = bool(np.all(ratio > 0.0))
    dec = max(1, sample.shape[0] // 10)
    head = float(np.mean(ratio[:dec]))
    tail = float(np.mean(ratio[-dec:]))
    checks["ratio_escapes"] = bool(tail >= growth_factor * head)

    path_fraction = None
    if exit_value_paths is not None:
        ok = 0
        for values in exit_value_paths:
            values = np.asarray(values, dtype=float)
            hit = np.flatnonzero(values <= zero_tol)
            if hit.size and np.all(values[hit[0] :] <= zero_tol):
                ok += 1
        path_fraction = ok / max(1, len(exit_value_paths))
        checks["V_vanishes_along_exits"] = bool(path_fraction == 1.0)

    for name, passed in checks.items():
        if not passed:
            failures.append((name,))
    witnesses = {
        "sup_V": float(v.max()),
        "sup_phi": float(p.max()),
        "inf_ratio": float(ratio.min()),
        "ratio_head_mean": head,
        "ratio_tail_mean": tail,
        "sup_LV": float(lv.max()),
        "inf_Lphi": float(lp.min()),
        "checks": checks,
    }
    if path_fraction is not None:
        witnesses["exit_path_fraction_vanishing"] = path_fraction
    verdict = "holds" if not failures else "violated"
    return CheckCertificate(
        check=f"admissible[{pair.name}]",
        verdict=verdict,
        witnesses=witnesses,
        counterexamples=tuple(failures),
        domain=f"escaping sample of {sample.shape[0]} states",
        qualifier="sample",
    )


# ---------------------------------------------------------------------------
# nonlinear measure-level inequality
# ---------------------------------------------------------------------------


def check_nonlinear_inequality(
    pair: LyapunovPair,
    support_states: np.ndarray,
    stream: RngStream,
    n_measures: int = 500,
    support_sizes: Sequence[int] = (1, 2, 5, 20),
    A_grid: np.ndarray | None = None,
    B_grid: np.ndarray | None = None,
    holder_tol: float = 1e-9,
) -> CheckCertificate:
    """Probe mu(LV) - mu(V) mu(Lphi)/mu(phi) <= A mu(phi) - B mu(V)^(1+eps)/mu(phi)^eps.

    Draws Dirichlet-weighted measures with supports sampled uniformly from
    ``support_states`` and fits the smallest A (with B on a log grid, and
    vice versa) dominating every sampled measure.  Also verifies, per
    measure, the Holder comparison mu(V)^(1+eps) <= mu(V^(1+eps)/phi^eps)
    mu(phi)^eps that powers the reduction to pointwise conditions.
    """
    if A_grid is None:
        A_grid = np.geomspace(1e-3, 1e3, 61)
    if B_grid is None:
        B_grid = np.geomspace(1e-3, 1e3, 61)
    support_states = np.atleast_2d(np.asarray(support_states))
    M = support_states.shape[0]
    if M < max(support_sizes):
        raise ValueError("support pool smaller than the largest requested support")

    V_all = np.asarray(pair.V(support_states), dtype=float)
    phi_all = np.asarray(pair.phi(support_states), dtype=float)
    LV_all = np.asarray(pair.LV(support_states), dtype=float)
    Lphi_all = np.asarray(pair.Lphi(support_states), dtype=float)
    pen_all = V_all ** (1.0 + pair.epsilon) / phi_all**pair.epsilon
    if np.any(phi_all <= 0.0) or np.any(V_all <= 0.0):
        raise ValueError("support states must avoid the absorbing set")

    gen = stream.generator()
    eps = pair.epsilon
    lhs = np.empty(n_measures)
    f_phi = np.empty(n_measures)
    f_pen = np.empty(n_measures)
    holder_gap = np.empty(n_measures)
    drawn: list[tuple[np.ndarray, np.ndarray]] = []
    for j in range(n_measures):
        size = support_sizes[j % len(support_sizes)]
        idx = gen.choice(M, size=size, replace=False)
        w = gen.dirichlet(np.ones(size))
        muV = float(w @ V_all[idx])
        muphi = float(w @ phi_all[idx])
        muLV = float(w @ LV_all[idx])
        muLphi = float(w @ Lphi_all[idx])
        mupen = float(w @ pen_all[idx])
        lhs[j] = muLV - muV * muLphi / muphi
        f_phi[j] = muphi
        f_pen[j] = muV ** (1.0 + eps) / muphi**eps
        holder_gap[j] = muV ** (1.0 + eps) - mupen * muphi**eps
        drawn.append((idx, w))

    holder_scale = np.maximum(np.abs(f_pen), 1e-300)
    holder_ok = bool(np.all(holder_gap <= holder_tol * holder_scale))

    # required A for each B so that lhs <= A f_phi - B f_pen on every measure
    A_required = np.array([np.max((lhs + b * f_pen) / f_phi) for b in B_grid])
    feasible = A_required <= A_grid[-1]
    best: dict | None = None
    if np.any(feasible):
        j_minA = int(np.argmin(np.where(feasible, A_required, np.inf)))
        j_maxB = int(np.flatnonzero(feasible)[-1])
        best = {
            "A_min": float(max(A_required[j_minA], A_grid[0])),
            "B_at_A_min": float(B_grid[j_minA]),
            "B_max": float(B_grid[j_maxB]),
            "A_at_B_max": float(max(A_required[j_maxB], A_grid[0])),
        }

    witnesses = {
        "n_measures": n_measures,
        "epsilon": eps,
        "holder_ok": holder_ok,
        "holder_max_gap": float(np.max(holder_gap / holder_scale)),
        "max_lhs": float(lhs.max()),
        "pareto": [
            {"B": float(b), "A_required": float(a)}
            for b, a in zip(B_grid[::10], A_required[::10])
        ],
    }
    if best is not None:
        witnesses.update(best)
    verdict = "holds" if (best is not None and holder_ok) else "violated"
    counterexamples: tuple = ()
    if verdict == "violated":
        j_bad = int(np.argmax((lhs + B_grid[0] * f_pen) / f_phi))
        idx, w = drawn[j_bad]
        counterexamples = (
            {
                "support": support_states[idx].tolist(),
                "weights": w.tolist(),
                "lhs": float(lhs[j_bad]),
            },
        )
    return CheckCertificate(
        check=f"nonlinear_inequality[{pair.name}]",
        verdict=verdict,
        witnesses=witnesses,
        counterexamples=counterexamples,
        domain=f"{n_measures} Dirichlet measures on {M} pooled states",
        seed=stream.seed,
        qualifier="empirical",
    )


# ---------------------------------------------------------------------------
# localized pointwise conditions
# ---------------------------------------------------------------------------


def check_condition_a(
    pair: LyapunovPair,
    states: np.ndarray,
    levels: np.ndarray,
    tol: float = 1e-9,
    interior_cap: int | None = None,
) -> CheckCertificate:
    """Find the smallest localizing level outside which -L phi <= 0.

    Args:
        pair: drift pair with exact Lphi.
        states: checked domain, shape (m, d).
        levels: localizing index of each state (the smallest n with the
            state inside the n-th localizing set).
        tol: absolute slack treated as zero.
        interior_cap: largest level still considered interior; violations
            above it mean the inequality fails arbitrarily far out on the
            checked domain.  Defaults to half the top level.
    """
    states = np.atleast_2d(np.asarray(states))
    levels = np.asarray(levels, dtype=np.int64)
    neg_lphi = -np.asarray(pair.Lphi(states), dtype=float)
    top = int(levels.max())
    cap = interior_cap if interior_cap is not None else max(1, top // 2)
    viol = neg_lphi > tol
    if not np.any(viol):
        n_star = int(levels.min())
    else:
        n_star = int(levels[viol].max())
    inside = levels <= n_star
    C = float(np.maximum(neg_lphi[inside], 0.0).max()) if np.any(inside) else 0.0
    witnesses = {
        "n_star": n_star,
        "C": C,
        "violations_inside": int(np.count_nonzero(viol)),
        "top_level_checked": top,
        "interior_cap": cap,
        "max_neg_Lphi_outside": float(neg_lphi[levels > n_star].max())
        if np.any(levels > n_star)
        else float("-inf"),
    }
    if n_star <= cap:
        return CheckCertificate(
            check=f"condition_a[{pair.name}]",
            verdict="holds",
            witnesses=witnesses,
            domain=f"{states.shape[0]} states, levels <= {top}",
            qualifier="exact-enumeration",
        )
    worst = np.argsort(neg_lphi)[-5:]
    return CheckCertificate(
        check=f"condition_a[{pair.name}]",
        verdict="violated",
        witnesses=witnesses,
        counterexamples=tuple(
            {"state": states[i].tolist(), "neg_Lphi": float(neg_lphi[i]), "level": int(levels[i])}
            for i in worst
            if viol[i]
        ),
        domain=f"{states.shape[0]} states, levels <= {top}",
        qualifier="exact-enumeration",
    )


def check_condition_b(
    pair: LyapunovPair,
    states: np.ndarray,
    levels: np.ndarray,
    cprime_grid: np.ndarray | None = None,
    tol: float = 1e-9,
    interior_cap: int | None = None,
) -> CheckCertificate:
    """Certify LV + C' V^(1+eps)/phi^eps <= C'' phi with the largest feasible C'.

    C' is scanned downward on a log grid; a value is feasible when the
    penalized drift is nonpositive outside a localizing set whose level
    stays below ``interior_cap``.  C'' is then the supremum of the
    positive part of the ratio to phi inside that set.
    """
    if cprime_grid is None:
        cprime_grid = np.geomspace(1e-2, 1e2, 41)
    states = np.atleast_2d(np.asarray(states))
    levels = np.asarray(levels, dtype=np.int64)
    top = int(levels.max())
    cap = interior_cap if interior_cap is not None else max(1, top // 2)
    lv = np.asarray(pair.LV(states), dtype=float)
    phi = np.asarray(pair.phi(states), dtype=float)
    pen = pair.penalty(states)

    for cprime in sorted(cprime_grid, reverse=True):
        s = lv + cprime * pen
        viol = s > tol
        m_star = int(levels[viol].max()) if np.any(viol) else int(levels.min())
        if m_star <= cap:
            inside = levels <= m_star
            cdbl = float(np.maximum(s[inside] / phi[inside], 0.0).max()) if np.any(inside) else 0.0
            return CheckCertificate(
                check=f"condition_b[{pair.name}]",
                verdict="holds",
                witnesses={
                    "c_prime": float(cprime),
                    "c_double_prime": cdbl,
                    "m_star": m_star,
                    "top_level_checked": top,
                    "interior_cap": cap,
                    "max_drift_outside": float(s[levels > m_star].max())
                    if np.any(levels > m_star)
                    else float("-inf"),
                },
                domain=f"{states.shape[0]} states, levels <= {top}",
                qualifier="exact-enumeration",
            )
    cprime = float(np.min(cprime_grid))
    s = lv + cprime * pen
    viol = s > tol
    worst = np.argsort(s)[-5:]
    return CheckCertificate(
        check=f"condition_b[{pair.name}]",
        verdict="violated",
        witnesses={
            "c_prime": cprime,
            "top_level_checked": top,
            "interior_cap": cap,
            "max_violating_level": int(levels[viol].max()) if np.any(viol) else -1,
        },
        counterexamples=tuple(
            {"state": states[i].tolist(), "drift": float(s[i]), "level": int(levels[i])}
            for i in worst
            if viol[i]
        ),
        domain=f"{states.shape[0]} states, levels <= {top}",
        qualifier="exact-enumeration",
    )


# ---------------------------------------------------------------------------
# integrated drift identity on exact truncations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DynkinResult:
    """Residuals of the integrated ratio identity on an exact truncation."""

    t_grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    quad_step: float

    @property
    def residuals(self) -> np.ndarray:
        return self.lhs - self.rhs

    @property
    def max_abs_residual(self) -> float:
        return float(np.abs(self.residuals).max())


def verify_dynkin_identity(
    tr: BoxTruncation,
    V: np.ndarray,
    phi: np.ndarray,
    x0,
    t_grid: np.ndarray,
    quad_step: float = 1e-3,
    semigroup_tol: float = 1e-14,
) -> DynkinResult:
    """Check the integrated identity for E[V]/E[phi] on a finite truncation.

    The truncated chain is the model: V and phi are given as vectors over
    the truncation states, the generator images are the exact matrix
    products Q V and Q phi, and the semigroup is evaluated by uniformization
    to ``semigroup_tol`` per step.  The time integral uses the trapezoid
    rule with step ``quad_step``; every requested t must sit on that
    quadrature lattice.
    """
    V = np.asarray(V, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if V.shape != (tr.n_states,) or phi.shape != (tr.n_states,):
        raise ValueError("V and phi must be vectors over the truncation states")
    if np.any(phi <= 0.0):
        raise ValueError("phi must be positive on the truncation states")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0.0) or np.any(np.diff(t_grid) <= 0.0):
        raise ValueError("t_grid must be strictly increasing and nonnegative")
    steps = np.round(t_grid / quad_step).astype(np.int64)
    if np.any(np.abs(t_grid - steps * quad_step) > 1e-9):
        raise ValueError("every t in t_grid must be a multiple of quad_step")

    Lv = tr.Q @ V
    Lp = tr.Q @ phi
    mu = tr.delta(x0)
    i0 = tr.index_of(x0)
    base = V[i0] / phi[i0]

    stepper = SemigroupStepper(tr, quad_step, semigroup_tol)

    def integrand(m: np.ndarray) -> tuple[float, float]:
        mphi = float(m @ phi)
        mV = float(m @ V)
        mLv = float(m @ Lv)
        mLp = float(m @ Lp)
        g = mLv / mphi - (mV / mphi) * (mLp / mphi)
        return g, mV / mphi

    g_prev, ratio = integrand(mu)
    integral = 0.0
    lhs = np.empty(len(t_grid))
    rhs = np.empty(len(t_grid))
    out = 0
    if steps[0] == 0:
        lhs[0] = ratio
        rhs[0] = base
        out = 1
    for k in range(1, int(steps[-1]) + 1):
        mu = stepper.step_left(mu)
        g, ratio = integrand(mu)
        integral += 0.5 * quad_step * (g_prev + g)
        g_prev = g
        while out < len(steps) and steps[out] == k:
            lhs[out] = ratio
            rhs[out] = base + integral
            out += 1
    return DynkinResult(t_grid=t_grid, lhs=lhs, rhs=rhs, quad_step=quad_step)


# ---------------------------------------------------------------------------
# Monte Carlo probes
# ---------------------------------------------------------------------------


def _single_time_grid(t: float) -> TimeGrid:
    return TimeGrid(t0=t, dt=1.0, n_points=1)


def doeblin_probe(
    model,
    small_states: Sequence,
    s_window: Sequence[float],
    mc_budget: int,
    stream: RngStream,
    conditional: bool = False,
    max_steps: int = 10**7,
) -> CheckCertificate:
    """Estimate a common minorizing component of the kernels {P_x(X_s in .)}.

    For every starting state in ``small_states`` and every time in
    ``s_window`` the law of X_s is estimated by Monte Carlo (restricted to
    survivors, renormalized when ``conditional``).  The certified mass a1 is
    the sum over states of the smallest Wilson lower confidence bound across
    kernels; the probe holds when a1 is positive.
    """
    kernels: list[dict[tuple, tuple[int, int]]] = []
    labels: list[str] = []
    for xi, x in enumerate(small_states):
        for si, s in enumerate(s_window):
            sub = stream.child(xi * len(tuple(s_window)) + si)
            init = EmpiricalMeasure({tuple(int(v) for v in np.ravel(x)): 1.0})
            cfg = SimBatchConfig(
                n_trajectories=mc_budget,
                horizon=float(s),
                grid=_single_time_grid(float(s)),
                max_steps=max_steps,
            )
            batch = simulate_batch(model, init, cfg, sub)
            alive = ~batch.absorbed[:, 0] & ~batch.guard_tripped
            n_eff = int(alive.sum()) if conditional else mc_budget
            counts: dict[tuple, tuple[int, int]] = {}
            if n_eff > 0:
                uniq, cts = np.unique(batch.states[alive, 0, :], axis=0, return_counts=True)
                for u, cnt in zip(uniq, cts):
                    counts[tuple(u.tolist())] = (int(cnt), n_eff)
            kernels.append(counts)
            labels.append(f"x={tuple(np.ravel(x).tolist())},s={s}")

    common = set(kernels[0].keys())
    for k in kernels[1:]:
        common &= set(k.keys())
    component: dict[tuple, float] = {}
    for state in common:
        lo = min(wilson_interval(*k[state])[0] for k in kernels)
        if lo > 0.0:
            component[state] = lo
    a1 = float(sum(component.values()))
    top = sorted(component.items(), key=lambda kv: -kv[1])[:10]
    # return probability into the small set itself, worst case over kernels
    small_keys = {tuple(int(v) for v in np.ravel(x)) for x in small_states}
    D_lcb = 1.0
    for k in kernels:
        hits = sum(cnt for s, (cnt, _) in k.items() if s in small_keys)
        n_eff = next(iter(k.values()))[1] if k else mc_budget
        D_lcb = min(D_lcb, wilson_interval(hits, n_eff)[0])
    witnesses = {
        "a1": a1,
        "conditional": conditional,
        "n_kernels": len(kernels),
        "mc_budget": mc_budget,
        "common_support_size": len(component),
        "component_top": [{"state": list(s), "mass_lcb": m} for s, m in top],
        "return_mass_lcb": float(D_lcb),
    }
    verdict = "holds" if a1 > 0.0 else "inconclusive"
    return CheckCertificate(
        check="doeblin_probe" + ("_conditional" if conditional else ""),
        verdict=verdict,
        witnesses=witnesses,
        domain=f"kernels {labels[:4]}{'...' if len(labels) > 4 else ''}",
        seed=stream.seed,
        qualifier="empirical",
    )


def harnack_ratio_probe(
    model,
    probe_states: Sequence,
    t_grid: np.ndarray,
    mc_budget: int,
    stream: RngStream,
    min_survivors: int = 25,
    max_steps: int = 10**7,
) -> CheckCertificate:
    """Track sup/inf ratios of survival probabilities over a small region.

    Estimates P_x(t < tau) for every probe state by sampling absorption
    times, reports the ratio curve with conservative Wilson bounds, and
    requires the tail of the curve to plateau (no significantly positive
    trend over the last third).  Times where the worst kernel keeps fewer
    than ``min_survivors`` survivors are dropped.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    horizon = float(t_grid.max())
    surv = np.empty((len(probe_states), len(t_grid)), dtype=np.int64)
    for xi, x in enumerate(probe_states):
        taus = model.sample_absorption_times(
            np.asarray(x), mc_budget, horizon, max_steps, stream.child(xi)
        )
        surv[xi] = (taus[None, :] > t_grid[:, None]).sum(axis=1)

    keep = surv.min(axis=0) >= min_survivors
    if not np.any(keep):
        return CheckCertificate(
            check="harnack_ratio_probe",
            verdict="inconclusive",
            witnesses={"reason": "no time with enough survivors", "mc_budget": mc_budget},
            domain=f"{len(probe_states)} states",
            seed=stream.seed,
            qualifier="empirical",
        )
    phat = surv / mc_budget
    ratio = phat.max(axis=0)[keep] / phat.min(axis=0)[keep]
    ucb = np.array(
        [
            max(wilson_interval(int(surv[x, k]), mc_budget)[1] for x in range(len(probe_states)))
            / max(
                min(wilson_interval(int(surv[x, k]), mc_budget)[0] for x in range(len(probe_states))),
                1e-12,
            )
            for k in np.flatnonzero(keep)
        ]
    )
    ts = t_grid[keep]
    tail = max(2, len(ts) // 3)
    slope, _, slope_se, _ = ols_line(ts[-tail:], ratio[-tail:])
    plateau = bool(slope <= 2.0 * slope_se)
    witnesses = {
        "C_m": float(ratio.max()),
        "ratio_final": float(ratio[-1]),
        "ratio_ucb_max": float(ucb.max()),
        "tail_slope": float(slope),
        "tail_slope_se": float(slope_se),
        "times_kept": int(keep.sum()),
        "mc_budget": mc_budget,
    }
    if plateau:
        return CheckCertificate(
            check="harnack_ratio_probe",
            verdict="holds",
            witnesses=witnesses,
            domain=f"{len(probe_states)} states, t in [{t_grid[0]}, {t_grid[-1]}]",
            seed=stream.seed,
            qualifier="empirical",
        )
    return CheckCertificate(
        check="harnack_ratio_probe",
        verdict="violated",
        witnesses=witnesses,
        counterexamples=tuple(
            {"t": float(t), "ratio": float(r)} for t, r in zip(ts[-tail:], ratio[-tail:])
        ),
        domain=f"{len(probe_states)} states, t in [{t_grid[0]}, {t_grid[-1]}]",
        seed=stream.seed,
        qualifier="empirical",
    )


def expo_moment_probe(
    model,
    starts: Sequence,
    total_threshold: int,
    lam: float,
    mc_budget: int,
    horizon: float,
    stream: RngStream,
    max_steps: int = 10**7,
    max_term_share: float = 0.2,
) -> CheckCertificate:
    """Estimate E_x[exp(lam (tau_U and tau))] along increasingly distant starts.

    tau_U is the return time to the recurrent core {|n| <= total_threshold}.
    The probe holds when the estimates stay uniformly bounded along the
    start sequence (no growth trend, bounded spread); a dominant single
    sample or heavy censoring yields "inconclusive".
    """
    estimates = []
    shares = []
    censored_total = 0
    for xi, x in enumerate(starts):
        outcomes, times = model.sample_return_times(
            np.asarray(x), mc_budget, total_threshold, horizon, max_steps, stream.child(xi)
        )
        censored = int(np.count_nonzero(outcomes == 2))
        censored_total += censored
        terms = np.exp(lam * np.where(outcomes == 2, horizon, times))
        estimates.append(float(terms.mean()))
        shares.append(float(terms.max() / terms.sum()))
    estimates = np.asarray(estimates)
    spread = float(estimates.max() / estimates.min())
    slope, _, slope_se, _ = ols_line(np.arange(len(estimates), dtype=float), estimates)
    heavy = max(shares) > max_term_share
    censor_frac = censored_total / (len(starts) * mc_budget)
    witnesses = {
        "lam": lam,
        "estimates": [float(e) for e in estimates],
        "spread": spread,
        "trend_slope": float(slope),
        "trend_slope_se": float(slope_se),
        "max_term_share": float(max(shares)),
        "censored_fraction": censor_frac,
        "mc_budget": mc_budget,
    }
    if heavy or censor_frac > 0.01:
        verdict = "inconclusive"
    elif spread <= 3.0 and slope <= 2.0 * slope_se:
        verdict = "holds"
    else:
        verdict = "violated"
    counterexamples: tuple = ()
    if verdict == "violated":
        counterexamples = tuple(
            {"start": list(np.ravel(s).tolist()), "estimate": float(e)}
            for s, e in zip(starts, estimates)
        )
    return CheckCertificate(
        check="expo_moment_probe",
        verdict=verdict,
        witnesses=witnesses,
        counterexamples=counterexamples,
        domain=f"starts {[int(np.sum(np.ravel(s))) for s in starts]} by total mass",
        seed=stream.seed,
        qualifier="empirical",
    )
