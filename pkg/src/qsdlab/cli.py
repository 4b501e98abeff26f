"""Batch front end: spec-driven runs, certificate checks, standalone
estimation, the two push-button reproduction tables, and a direct line to
the truncation oracle.

Exit codes: 0 success, 1 violated certificate or failed
estimation/reproduction, 2 invalid spec or arguments.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

__all__ = ["main", "build_parser"]


def _add_common(sp, with_out: bool = True) -> None:
    sp.add_argument("--spec", required=True, help="experiment spec (JSON)")
    if with_out:
        sp.add_argument("--out", default=None,
                        help="output directory (default: spec's 'output' "
                             "field, else runs/<name>)")
    sp.add_argument("--seed", type=int, default=None,
                    help="override the spec seed")
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads (fallback: env QSDLAB_THREADS)")
    sp.add_argument("--format", choices=("csv", "json"), default="csv",
                    help="table artifact format (default csv)")
    sp.add_argument("--no-figures", action="store_true",
                    help="emit data artifacts only")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qsdlab",
        description="simulation and verification runs for absorbed "
                    "Markov processes")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="checks then estimation, full pipeline")
    _add_common(sp)
    sp = sub.add_parser("check", help="certificates only")
    _add_common(sp)
    sp = sub.add_parser("estimate", help="estimators only")
    _add_common(sp)
    sp.add_argument("--budget", type=int, default=None,
                    help="override n_trajectories and n_particles")

    sp = sub.add_parser("oracle",
                        help="principal-eigenvector QSD on a truncation")
    _add_common(sp)
    sp.add_argument("--box", type=int, default=None,
                    help="truncation side (default: auto-sized)")

    sp = sub.add_parser("reproduce-thm-3-2",
                        help="discrete-chain acceptance pipeline, "
                             "pass/fail table")
    sp = sub.add_parser("reproduce-thm-4-2",
                        help="diffusion acceptance pipeline, pass/fail table")
    return p


def _resolve_threads(args) -> int | None:
    threads = getattr(args, "threads", None)
    if threads is None:
        env = os.environ.get("QSDLAB_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ValueError(
                    f"QSDLAB_THREADS={env!r} is not an integer") from None
    if threads is not None:
        if threads < 1:
            raise ValueError(f"--threads must be >= 1, got {threads}")
        import numba

        numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
    return threads


def _pipeline(args, stages: str) -> int:
    from .experiment import SpecError, load_spec, run_experiment

    try:
        spec = load_spec(args.spec)
        threads = _resolve_threads(args)
    except (SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if stages == "estimation":
        if not spec.estimation:
            print(f"error: {spec.path}:1: spec has no estimation block",
                  file=sys.stderr)
            return 2
        budget = getattr(args, "budget", None)
        if budget is not None:
            if budget <= 0:
                print(f"error: estimation budget must be positive, "
                      f"got {budget}", file=sys.stderr)
                return 2
            if "n_trajectories" in spec.estimation:
                spec.estimation["n_trajectories"] = budget
            if "n_particles" in spec.estimation:
                spec.estimation["n_particles"] = budget
    if stages == "checks" and not spec.checks:
        print(f"error: {spec.path}:1: spec has no checks list",
              file=sys.stderr)
        return 2

    result = run_experiment(spec, out_dir=args.out, seed=args.seed,
                            threads=threads, fmt=args.format,
                            figures=not args.no_figures, stages=stages)
    for line in result.messages:
        print(line)
    return result.exit_code


def _oracle(args) -> int:
    from .experiment import SpecError, _build_model, load_spec
    from .qsd import qsd_eigen_oracle

    try:
        spec = load_spec(args.spec)
        _resolve_threads(args)
    except (SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if spec.model["kind"] != "bd":
        print(f"error: {spec.path}:1: the truncation oracle needs a "
              "discrete chain (model kind 'bd')", file=sys.stderr)
        return 2
    model = _build_model(spec)
    est = qsd_eigen_oracle(model, box=args.box)
    diag = est.diagnostics
    print(f"model: {model.name} (dimension {model.dimension})")
    print(f"box: {diag['box']}  states: {diag['n_states']}  "
          f"residual: {diag['residual_l1']:.3e}")
    print(f"lambda0: {est.lambda0:.9f}  "
          f"CI [{est.lambda0_ci[0]:.9f}, {est.lambda0_ci[1]:.9f}]")
    header, rows = est.atom_table()
    rows = sorted(rows, key=lambda r: -r[-1])
    shown = rows if len(rows) <= 50 else rows[:50]
    print(",".join(header))
    for row in shown:
        print(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                       for v in row))
    if len(rows) > len(shown):
        print(f"... {len(rows) - len(shown)} lighter atoms omitted "
              f"(use --out to keep all)")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        est.to_csv(out / "qsd_eigen.csv")
        est.write_json(out / "qsd_eigen.json")
        print(f"wrote qsd_eigen.csv, qsd_eigen.json to {out}")
    return 0


def _reproduce(which: str) -> int:
    from . import reproduce

    fn = (reproduce.reproduce_thm_3_2 if which == "3-2"
          else reproduce.reproduce_thm_4_2)
    print(f"reproduction pipeline {which} "
          f"({'discrete chain' if which == '3-2' else 'diffusion'}); "
          "criteria run at full budget, expect minutes")
    results = fn(log=print)
    ok = all(r.passed and r.in_budget for r in results)
    print("result: " + ("ALL PASS" if ok else "FAILURES PRESENT"))
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _pipeline(args, "all")
    if args.command == "check":
        return _pipeline(args, "checks")
    if args.command == "estimate":
        return _pipeline(args, "estimation")
    if args.command == "oracle":
        return _oracle(args)
    if args.command == "reproduce-thm-3-2":
        return _reproduce("3-2")
    if args.command == "reproduce-thm-4-2":
        return _reproduce("4-2")
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
