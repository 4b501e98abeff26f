"""Figure rendering for report runs.

Everything here consumes finished estimation objects and writes PNG files;
nothing feeds back into the numerics, so a run with figures disabled
produces byte-identical data artifacts to one with them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_tv_decay",
    "plot_survival",
    "plot_measure",
    "plot_profiles",
]


def _fit_curve(fit, times):
    lo, hi = fit.window
    mask = (times >= lo) & (times <= hi)
    t = times[mask]
    return t, fit.C * np.exp(-fit.rate * t)


def plot_tv_decay(report, path, title: str | None = None) -> str:
    """Semilog TV curve with its bootstrap band and the fitted line."""
    times = np.asarray(report.times, dtype=float)
    tv = np.asarray(report.tv, dtype=float)
    ci = np.asarray(report.tv_ci, dtype=float)
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    pos = tv > 0.0
    ax.plot(times[pos], tv[pos], "o-", ms=3.5, lw=1.0, color="tab:blue",
            label="TV estimate")
    band = pos & (ci[:, 0] > 0.0)
    if band.any():
        ax.fill_between(times[band], ci[band, 0], ci[band, 1],
                        color="tab:blue", alpha=0.2, lw=0,
                        label="bootstrap 95% CI")
    if report.fit is not None:
        t, y = _fit_curve(report.fit, times)
        ax.plot(t, y, "--", color="tab:red", lw=1.4,
                label=f"fit: rate {report.fit.rate:.3f}, "
                      f"$R^2$ {report.fit.r_squared:.3f}")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("TV distance")
    ax.set_title(title or "TV decay between conditioned laws")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_survival(report, path, title: str | None = None) -> str:
    """Semilog survivor fractions for both initial laws, with the rate fit."""
    times = np.asarray(report.times, dtype=float)
    n = report.n_trajectories
    fa = np.asarray(report.survivors_a, dtype=float) / n
    fb = np.asarray(report.survivors_b, dtype=float) / n
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(times[fa > 0], fa[fa > 0], "o-", ms=3.5, lw=1.0,
            color="tab:blue", label="initial law a")
    ax.plot(times[fb > 0], fb[fb > 0], "s-", ms=3.5, lw=1.0,
            color="tab:green", label="initial law b")
    if report.survival_fit is not None:
        t, y = _fit_curve(report.survival_fit, times)
        ax.plot(t, y, "--", color="tab:red", lw=1.4,
                label=f"fit: rate {report.survival_fit.rate:.3f}")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("survivor fraction")
    ax.set_title(title or "Survival decay")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_measure(estimate, path, title: str | None = None) -> str:
    """Render a distribution estimate: 2d weighted scatter, else bars."""
    measure = getattr(estimate, "measure", estimate)
    if title is None and hasattr(estimate, "method"):
        title = (f"{estimate.method}: "
                 f"$\\lambda_0$ = {estimate.lambda0:.4f}")
    states, weights = measure.support_arrays()
    states = np.atleast_2d(np.asarray(states, dtype=float))
    grid = getattr(measure, "bin_grid", None)
    if grid is not None:
        # binned atoms are index tuples; plot at the cell centers
        centers = [0.5 * (np.asarray(e)[:-1] + np.asarray(e)[1:])
                   for e in grid.edges]
        states = np.stack(
            [centers[j][states[:, j].astype(int)] for j in range(len(centers))],
            axis=1,
        )
    fig, ax = plt.subplots(figsize=(5.6, 4.6))
    if states.shape[1] == 2:
        order = np.argsort(weights)
        sc = ax.scatter(states[order, 0], states[order, 1],
                        c=weights[order], s=18, cmap="viridis", marker="s")
        fig.colorbar(sc, ax=ax, label="weight")
        ax.set_xlabel("coordinate 0")
        ax.set_ylabel("coordinate 1")
    elif states.shape[1] == 1:
        order = np.argsort(states[:, 0])
        ax.bar(states[order, 0], weights[order],
               width=0.8 * float(np.min(np.diff(np.unique(states[:, 0]))))
               if states.shape[0] > 1 else 0.8,
               color="tab:blue")
        ax.set_xlabel("state")
        ax.set_ylabel("weight")
    else:
        order = np.argsort(weights)[::-1][:50]
        ax.bar(np.arange(order.size), weights[order], color="tab:blue")
        ax.set_xlabel("atom rank")
        ax.set_ylabel("weight")
    ax.set_title(title or "distribution estimate")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_profiles(h, g, path, title: str | None = None) -> str:
    """Shapes of the decreasing and concave profiles with their knots."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.8, 3.8))
    x = np.geomspace(1e-3 * h.a, 6.0 * h.B_a, 600)
    ax1.plot(x, h.value(x), color="tab:blue", lw=1.4)
    for knot, lab in ((0.5 * h.a, "a/2"), (h.a, "a"), (h.B_a, "$B_a$")):
        ax1.axvline(knot, color="gray", ls=":", lw=0.8)
        ax1.annotate(lab, (knot, ax1.get_ylim()[1]), fontsize=7,
                     ha="center", va="top")
    ax1.set_xscale("log")
    ax1.set_xlabel("x")
    ax1.set_title(f"decreasing profile, tail exponent {h.beta:.2f}")
    y = np.linspace(0.0, 6.0, 600)
    ax2.plot(y, g.value(y), color="tab:green", lw=1.4)
    for knot in (1.0, 2.0):
        ax2.axvline(knot, color="gray", ls=":", lw=0.8)
    ax2.set_xlabel("x")
    ax2.set_title("increasing concave profile")
    for ax in (ax1, ax2):
        ax.grid(True, alpha=0.25)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
