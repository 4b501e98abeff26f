"""Experiment runner: JSON spec in, artifact directory out.

A spec names a model, how to pick the drift pair, which certificates to
produce, and which estimators to run.  Stages execute in dependency order
(model, parameter selection, certificates, estimation); every stage's wall
time and every file written is recorded in manifest.json.  All randomness
derives from the single spec seed through fixed substream indices:
0 the measure-sampling check, 1 the conditioned-MC report, 2 the particle
estimator, 3 the pathwise comparison.

Exit contract: 0 when every requested certificate holds and every
estimation completes, 1 when any certificate is violated (the message
names the certificate file carrying the counterexamples), 2 when the spec
is invalid (the message carries the offending file line).
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import birth_death as bd
from . import feller as fl
from .core.rng import RngStream
from .core.simulate import TimeGrid, write_csv
from .lyapunov import (
    check_admissible,
    check_condition_a,
    check_condition_b,
    check_nonlinear_inequality,
)
from .qsd import convergence_report, fleming_viot, qsd_eigen_oracle
from .uniformization import auto_box_size, build_truncation

__all__ = [
    "SpecError",
    "ExperimentSpec",
    "RunResult",
    "load_spec",
    "run_experiment",
]

_METHODS = ("eigen_oracle", "conditioned_mc", "fleming_viot")
_BD_CHECKS = ("assumption", "condition_a", "condition_b", "nonlinear", "admissible")
_FELLER_CHECKS = ("assumption", "conditions", "nonlinear", "comparison", "admissible")

# substream indices under the spec seed, never reassigned
_SUB_NONLINEAR = 0
_SUB_REPORT = 1
_SUB_PARTICLES = 2
_SUB_COMPARISON = 3


class SpecError(Exception):
    """Invalid experiment spec; str() carries 'path:line: message'."""

    def __init__(self, path, line: int, message: str):
        self.path = str(path)
        self.line = int(line)
        self.message = message
        super().__init__(f"{self.path}:{self.line}: {message}")


def _line_of(text: str, *keys: str) -> int:
    """First line mentioning any of the quoted keys, else line 1."""
    for key in keys:
        needle = f'"{key}"'
        for i, line in enumerate(text.splitlines(), start=1):
            if needle in line:
                return i
    return 1


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated spec contents plus the provenance needed for errors."""

    name: str
    seed: int
    model: dict
    lyapunov: object
    checks: tuple
    estimation: dict
    output: str | None
    path: str
    text: str = field(repr=False)
    sha256: str = ""

    def fail(self, key: str, message: str) -> SpecError:
        return SpecError(self.path, _line_of(self.text, key), message)


def _require(payload: dict, key: str, path, text: str, anchor: str | None = None):
    if key not in payload:
        raise SpecError(path, _line_of(text, anchor or key),
                        f"missing required field {key!r}")
    return payload[key]


def _check_matrix(c, d: int, path, text: str, key: str) -> np.ndarray:
    arr = np.asarray(c, dtype=float)
    if arr.shape != (d, d):
        raise SpecError(path, _line_of(text, key),
                        f"{key!r} must be a {d}x{d} matrix matching the rate "
                        f"vectors, got shape {arr.shape}")
    return arr


def load_spec(path) -> ExperimentSpec:
    """Parse and validate a spec file; every failure is line-anchored."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(path, 1, f"cannot read spec: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(path, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise SpecError(path, 1, "spec must be a JSON object")

    schema = _require(payload, "schema", path, text)
    if schema != 1:
        raise SpecError(path, _line_of(text, "schema"),
                        f"unsupported schema version {schema!r} (expected 1)")
    name = payload.get("name", path.stem)
    if not isinstance(name, str) or not name:
        raise SpecError(path, _line_of(text, "name"), "name must be a nonempty string")
    seed = _require(payload, "seed", path, text)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise SpecError(path, _line_of(text, "seed"),
                        "seed is mandatory and must be a nonnegative integer")

    model = _require(payload, "model", path, text)
    if not isinstance(model, dict):
        raise SpecError(path, _line_of(text, "model"), "model must be an object")
    kind = _require(model, "kind", path, text, anchor="kind")
    if kind not in ("bd", "feller"):
        raise SpecError(path, _line_of(text, "kind"),
                        f"model kind must be 'bd' or 'feller', got {kind!r}")
    _validate_model(kind, model, path, text)

    lyap = payload.get("lyapunov", "auto")
    if lyap != "auto" and not isinstance(lyap, dict):
        raise SpecError(path, _line_of(text, "lyapunov"),
                        "lyapunov must be \"auto\" or a parameter object")

    checks = payload.get("checks", [])
    if not isinstance(checks, list):
        raise SpecError(path, _line_of(text, "checks"), "checks must be a list")
    allowed = _BD_CHECKS if kind == "bd" else _FELLER_CHECKS
    for c in checks:
        if c not in allowed:
            raise SpecError(path, _line_of(text, str(c), "checks"),
                            f"unknown check {c!r} for kind {kind!r} "
                            f"(allowed: {', '.join(allowed)})")

    estimation = payload.get("estimation", {})
    if not isinstance(estimation, dict):
        raise SpecError(path, _line_of(text, "estimation"),
                        "estimation must be an object")
    if estimation:
        _validate_estimation(kind, model, estimation, path, text)

    output = payload.get("output")
    if output is not None and not isinstance(output, str):
        raise SpecError(path, _line_of(text, "output"), "output must be a string path")

    return ExperimentSpec(
        name=name,
        seed=seed,
        model=model,
        lyapunov=lyap,
        checks=tuple(checks),
        estimation=estimation,
        output=output,
        path=str(path),
        text=text,
        sha256=hashlib.sha256(text.encode()).hexdigest(),
    )


def _validate_model(kind: str, model: dict, path, text: str) -> None:
    if kind == "bd":
        lam = np.asarray(_require(model, "lam", path, text), dtype=float)
        mu = np.asarray(_require(model, "mu", path, text), dtype=float)
        d = lam.size
        if mu.size != d:
            raise SpecError(path, _line_of(text, "mu"),
                            f"'mu' has {mu.size} entries but 'lam' has {d}")
        gamma = model.get("gamma")
        if gamma is not None:
            _check_matrix(gamma, d, path, text, "gamma")
        _check_matrix(_require(model, "c", path, text), d, path, text, "c")
    else:
        r = np.asarray(_require(model, "r", path, text), dtype=float)
        d = r.size
        gamma = model.get("gamma")
        if gamma is not None and np.asarray(gamma, dtype=float).size != d:
            raise SpecError(path, _line_of(text, "gamma"),
                            f"'gamma' must have {d} entries matching 'r'")
        _check_matrix(_require(model, "c", path, text), d, path, text, "c")
        dt = model.get("dt", 1e-3)
        if not (isinstance(dt, (int, float)) and dt > 0):
            raise SpecError(path, _line_of(text, "dt"), "dt must be positive")


def _validate_estimation(kind: str, model: dict, est: dict, path, text: str) -> None:
    methods = _require(est, "methods", path, text, anchor="methods")
    if not isinstance(methods, list) or not methods:
        raise SpecError(path, _line_of(text, "methods"),
                        "methods must name at least one estimator")
    for m in methods:
        if m not in _METHODS:
            raise SpecError(path, _line_of(text, str(m), "methods"),
                            f"unknown method {m!r} (allowed: {', '.join(_METHODS)})")
    if "eigen_oracle" in methods and kind != "bd":
        raise SpecError(path, _line_of(text, "methods"),
                        "eigen_oracle needs a discrete chain (kind 'bd')")
    d = len(model.get("lam", model.get("r", [])))
    if "conditioned_mc" in methods:
        n = est.get("n_trajectories", 0)
        if not isinstance(n, int) or n < 1000:
            raise SpecError(path, _line_of(text, "n_trajectories", "estimation"),
                            "conditioned_mc needs n_trajectories >= 1000 "
                            f"(got {n!r}); TV curves below that are noise")
        grid = est.get("t_grid")
        if not isinstance(grid, dict) or not {"t0", "dt", "n_points"} <= set(grid):
            raise SpecError(path, _line_of(text, "t_grid", "estimation"),
                            "conditioned_mc needs t_grid with t0, dt, n_points")
        initial = est.get("initial")
        if (not isinstance(initial, list) or len(initial) != 2
                or any(len(np.atleast_1d(x)) != d for x in initial)):
            raise SpecError(path, _line_of(text, "initial", "estimation"),
                            "conditioned_mc needs 'initial': two states of "
                            f"dimension {d} (the two conditioned laws)")
    if "fleming_viot" in methods:
        n = est.get("n_particles", 0)
        if not isinstance(n, int) or n < 100:
            raise SpecError(path, _line_of(text, "n_particles", "estimation"),
                            f"fleming_viot needs n_particles >= 100 (got {n!r})")
        horizon = est.get("horizon", 0)
        if not (isinstance(horizon, (int, float)) and horizon > 0):
            raise SpecError(path, _line_of(text, "horizon", "estimation"),
                            "fleming_viot needs a positive horizon")
        initial = est.get("initial")
        if not initial or len(np.atleast_1d(initial[0])) != d:
            raise SpecError(path, _line_of(text, "initial", "estimation"),
                            f"fleming_viot needs 'initial' states of dimension {d}")


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    manifest: dict
    messages: list


def _build_model(spec: ExperimentSpec):
    m = spec.model
    if m["kind"] == "bd":
        d = len(m["lam"])
        gamma = m.get("gamma", np.zeros((d, d)))
        return bd.BDModel.lotka_volterra(m["lam"], m["mu"], gamma, m["c"],
                                         name=m.get("name", f"{spec.name}_model"))
    return fl.FellerModel.lotka_volterra(m["r"], m["c"], m.get("gamma"),
                                         name=m.get("name", f"{spec.name}_model"),
                                         dt=m.get("dt", 1e-3))


def _bd_slice_states(d: int, k_lo: int, k_hi: int) -> tuple[np.ndarray, np.ndarray]:
    """All positive states with k_lo <= |n| <= k_hi, with levels |n|."""
    blocks, levels = [], []
    for k in range(k_lo, k_hi + 1):
        for block in bd.simplex_slice_chunks(k, d):
            blocks.append(block)
            levels.append(np.full(block.shape[0], k, dtype=np.int64))
    return np.concatenate(blocks), np.concatenate(levels)


def _select_bd(model, lyap, spec: ExperimentSpec):
    """Drift pair selection; returns (params, pair, pnm_certificate_or_None)."""
    d = model.dimension
    if lyap == "auto":
        lyap = {}
    k_check = int(lyap.get("k_check", 200))
    if k_check <= d:
        raise spec.fail("k_check", f"k_check must exceed the dimension {d}")
    pnm = None
    if set(lyap) <= {"k_check"}:
        eta, pnm = bd.auto_select_eta(model, (d, k_check))
        params = bd.select_bd_params(model, k_check=k_check, eta=eta)
    elif set(lyap) <= {"eta", "k_check"}:
        eta = float(lyap["eta"])
        pnm = bd.check_assumption_PNM(model, eta, (d, k_check))
        params = None
        if pnm.holds:
            params = bd.select_bd_params(model, k_check=k_check, eta=eta)
    else:
        try:
            params = bd.BDLyapunovParams(
                alpha=float(_require(lyap, "alpha", spec.path, spec.text)),
                beta=float(_require(lyap, "beta", spec.path, spec.text)),
                epsilon=float(_require(lyap, "epsilon", spec.path, spec.text)),
                eta=float(_require(lyap, "eta", spec.path, spec.text)),
            )
        except ValueError as exc:
            raise spec.fail("lyapunov", str(exc)) from exc
    pair = bd.build_bd_pair(model, params) if params is not None else None
    return params, pair, pnm, k_check


def _select_feller(model, lyap, spec: ExperimentSpec):
    eta = 0.5 if lyap == "auto" else float(lyap.get("eta", 0.5))
    if not 0.0 < eta < 1.0:
        raise spec.fail("eta", "feller eta must sit in (0, 1)")
    try:
        params = fl.auto_feller_params(model, eta=eta)
        mc = fl.compute_M(params)
        beta = fl.select_feller_beta(params, mc)
        if lyap != "auto" and "beta" in lyap:
            beta = float(lyap["beta"])
        h = fl.build_h_beta(params, beta, mc)
        g = fl.build_g(params)
        epsilon = fl.feller_epsilon(params, beta, model.dimension)
        pair = fl.build_feller_pair(model, params, h, g, epsilon)
    except ValueError as exc:
        raise spec.fail("lyapunov", str(exc)) from exc
    return params, h, g, epsilon, pair


def _run_bd_checks(model, spec, ctx, out_dir, stream, record):
    params, pair, pnm, k_check = ctx
    d = model.dimension
    assumption_violated = pnm is not None and not pnm.holds
    dependent = ("condition_a", "condition_b", "nonlinear", "admissible")
    for check in spec.checks:
        if check == "assumption":
            cert = pnm if pnm is not None else bd.check_assumption_PNM(
                model, params.eta, (d, k_check))
            record(check, cert)
            continue
        if assumption_violated and check in dependent:
            record(check, None, note="skipped: assumption certificate violated, "
                                      "the selected pair is not certified")
            continue
        if check == "condition_a":
            states, levels = _bd_slice_states(d, d, k_check)
            record(check, check_condition_a(pair, states, levels))
        elif check == "condition_b":
            states, levels = _bd_slice_states(d, d, k_check)
            record(check, check_condition_b(pair, states, levels))
        elif check == "nonlinear":
            box = auto_box_size(model)
            tr = build_truncation(model, box)
            record(check, check_nonlinear_inequality(
                pair, tr.states, stream.child(_SUB_NONLINEAR), n_measures=500))
        elif check == "admissible":
            ks = np.arange(1, 61)
            sample = np.stack([ks] * d, axis=1)
            record(check, check_admissible(pair, sample))


def _run_feller_checks(model, spec, ctx, out_dir, stream, record):
    params, h, g, epsilon, pair = ctx
    for check in spec.checks:
        if check == "assumption":
            record(check, fl.check_assumption_feller(model, params))
        elif check == "conditions":
            record(check, fl.check_feller_conditions(model, params, h, g, epsilon))
        elif check == "nonlinear":
            # moderate interior pool; the wide-grid tails underflow the products
            axis = np.geomspace(0.05, 0.5 * params.B_a, 14)
            mesh = np.meshgrid(*([axis] * model.dimension), indexing="ij")
            z = np.stack([m.ravel() for m in mesh], axis=1)
            pool = z * (0.5 * model.gamma)
            record(check, check_nonlinear_inequality(
                pair, pool, stream.child(_SUB_NONLINEAR), n_measures=500))
        elif check == "comparison":
            x0 = np.full(model.dimension, 1.0)
            record(check, fl.coupled_comparison(
                model, params, x0, n_paths=200, horizon=2.0,
                stream=stream.child(_SUB_COMPARISON)))
        elif check == "admissible":
            grow = np.geomspace(0.2, 20.0, 60)
            sample = np.stack([grow] * model.dimension, axis=1)
            record(check, check_admissible(pair, sample))


def _write_table(out_dir: Path, stem: str, header, rows, fmt: str) -> str:
    if fmt == "csv":
        name = f"{stem}.csv"
        write_csv(out_dir / name, header, rows)
        return name
    name = f"{stem}_table.json"
    payload = {"header": list(header),
               "rows": [[v if isinstance(v, (int, str)) else float(v) for v in row]
                        for row in rows]}
    with open(out_dir / name, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return name


def _run_estimation(model, spec, out_dir, stream, fmt, figures,
                    artifacts, figure_files, messages):
    est = spec.estimation
    results = {}
    for method in est["methods"]:
        if method == "eigen_oracle":
            estimate = qsd_eigen_oracle(model, box=est.get("box"))
            artifacts.append(_write_table(out_dir, "qsd_eigen",
                                          *estimate.atom_table(), fmt=fmt))
            estimate.write_json(out_dir / "qsd_eigen.json")
            artifacts.append("qsd_eigen.json")
            messages.append(
                f"eigen_oracle: lambda0 = {estimate.lambda0:.6f} on box "
                f"{estimate.diagnostics['box']}, {len(estimate.measure.atoms)} atoms")
            if figures:
                from .plots import plot_measure
                figure_files.append(Path(plot_measure(
                    estimate, out_dir / "qsd_eigen.png")).name)
            results[method] = estimate
        elif method == "conditioned_mc":
            g = est["t_grid"]
            t_grid = TimeGrid(float(g["t0"]), float(g["dt"]), int(g["n_points"]))
            init_a, init_b = est["initial"][0], est["initial"][1]
            report = convergence_report(
                model, init_a, init_b, t_grid, est["n_trajectories"],
                stream.child(_SUB_REPORT),
                bins_per_axis=est.get("bins_per_axis", 40),
                n_boot=est.get("n_boot", 150),
            )
            artifacts.append(_write_table(out_dir, "convergence",
                                          *report.table(), fmt=fmt))
            report.write_json(out_dir / "convergence.json")
            artifacts.append("convergence.json")
            artifacts.append(_write_table(out_dir, "survival",
                                          *report.survival_table(), fmt=fmt))
            if report.fit is not None:
                messages.append(
                    f"conditioned_mc: TV rate = {report.fit.rate:.4f} "
                    f"(R2 = {report.fit.r_squared:.3f}), "
                    f"survival lambda0 = {report.lambda0:.4f}")
            else:
                messages.append("conditioned_mc: TV fit unavailable "
                                f"({report.meta.get('fit_error', 'no fit')})")
            if figures:
                from .plots import plot_survival, plot_tv_decay
                figure_files.append(Path(plot_tv_decay(
                    report, out_dir / "convergence.png")).name)
                figure_files.append(Path(plot_survival(
                    report, out_dir / "survival.png")).name)
            results[method] = report
        elif method == "fleming_viot":
            estimate = fleming_viot(
                model, np.atleast_1d(est["initial"][0]),
                est["n_particles"], float(est["horizon"]),
                stream.child(_SUB_PARTICLES),
                epoch_len=est.get("epoch_len", 0.05),
                bins_per_axis=est.get("bins_per_axis", 40),
            )
            artifacts.append(_write_table(out_dir, "qsd_fv",
                                          *estimate.atom_table(), fmt=fmt))
            estimate.write_json(out_dir / "qsd_fv.json")
            artifacts.append("qsd_fv.json")
            messages.append(
                f"fleming_viot: lambda0 = {estimate.lambda0:.4f} "
                f"CI [{estimate.lambda0_ci[0]:.4f}, {estimate.lambda0_ci[1]:.4f}], "
                f"{len(estimate.measure.atoms)} atoms")
            if figures:
                from .plots import plot_measure
                figure_files.append(Path(plot_measure(
                    estimate, out_dir / "qsd_fv.png")).name)
            results[method] = estimate
    return results


def run_experiment(spec: ExperimentSpec, out_dir=None, seed: int | None = None,
                   threads: int | None = None, fmt: str = "csv",
                   figures: bool = True, stages: str = "all") -> RunResult:
    """Execute a validated spec.  ``stages``: "all" | "checks" | "estimation"."""
    if fmt not in ("csv", "json"):
        raise ValueError(f"fmt must be 'csv' or 'json', got {fmt!r}")
    out_dir = Path(out_dir if out_dir is not None
                   else (spec.output or f"runs/{spec.name}"))
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = spec.seed if seed is None else seed
    stream = RngStream(seed)
    messages: list = []
    artifacts: list = []
    figure_files: list = []
    certificates: dict = {}
    skipped: dict = {}
    wall: dict = {}
    violated: list = []

    t0 = time.perf_counter()
    model = _build_model(spec)
    wall["model"] = time.perf_counter() - t0
    messages.append(f"model: {model.name} (kind {spec.model['kind']}, "
                    f"dimension {model.dimension})")

    run_checks = stages in ("all", "checks") and spec.checks
    run_est = stages in ("all", "estimation") and spec.estimation

    ctx = None
    if run_checks:
        t0 = time.perf_counter()
        if spec.model["kind"] == "bd":
            ctx = _select_bd(model, spec.lyapunov, spec)
            params = ctx[0]
            if params is not None:
                messages.append(
                    f"params: eta = {params.eta:g}, alpha = {params.alpha:g}, "
                    f"beta = {params.beta:g}, epsilon = {params.epsilon:g}")
        else:
            ctx = _select_feller(model, spec.lyapunov, spec)
            params, h = ctx[0], ctx[1]
            messages.append(
                f"params: eta = {params.eta:g}, a = {params.a:g}, "
                f"B_a = {params.B_a:g}, beta = {h.beta:g}, "
                f"epsilon = {ctx[3]:g}")
        wall["params"] = time.perf_counter() - t0

        t0 = time.perf_counter()

        def record(check: str, cert, note: str | None = None) -> None:
            name = f"{check}_certificate.json"
            if cert is None:
                skipped[check] = note or "skipped"
                messages.append(f"certificate {check}: {skipped[check]}")
                return
            cert.write_json(out_dir / name)
            artifacts.append(name)
            certificates[check] = cert.verdict
            messages.append(f"certificate {check}: {cert.verdict}")
            if cert.verdict == "violated":
                violated.append((check, name, len(cert.counterexamples)))

        if spec.model["kind"] == "bd":
            _run_bd_checks(model, spec, ctx, out_dir, stream, record)
        else:
            _run_feller_checks(model, spec, ctx, out_dir, stream, record)
        wall["checks"] = time.perf_counter() - t0

    estimation_failed = None
    if run_est:
        t0 = time.perf_counter()
        try:
            _run_estimation(model, spec, out_dir, stream, fmt, figures,
                            artifacts, figure_files, messages)
        except (ValueError, RuntimeError) as exc:
            estimation_failed = str(exc)
            messages.append(f"estimation failed: {exc}")
        wall["estimation"] = time.perf_counter() - t0

    exit_code = 1 if (violated or estimation_failed) else 0
    for check, name, n_ce in violated:
        messages.append(
            f"VIOLATED: certificate {check} failed; see {out_dir / name} "
            f"({n_ce} counterexample{'s' if n_ce != 1 else ''} attached)")

    import numba
    import scipy

    manifest = {
        "spec": {"path": spec.path, "name": spec.name, "sha256": spec.sha256,
                 "schema": 1},
        "seed": seed,
        "threads": threads,
        "format": fmt,
        "stages": stages,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
            "qsdlab": __version__,
        },
        "artifacts": sorted(artifacts),
        "figures": sorted(figure_files),
        "certificates": certificates,
        "skipped": skipped,
        "estimation_error": estimation_failed,
        "wall_times": {k: round(v, 3) for k, v in wall.items()},
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "exit_code": exit_code,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    n_fig = len(figure_files)
    messages.append(f"wrote {len(artifacts)} artifacts"
                    + (f" + {n_fig} figure{'s' if n_fig != 1 else ''}"
                       if n_fig else "")
                    + f" to {out_dir}")
    return RunResult(exit_code=exit_code, out_dir=out_dir,
                     manifest=manifest, messages=messages)
