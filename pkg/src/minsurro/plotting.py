"""Figures for the benchmark reports (PNG, non-interactive backend)."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 9, "axes.titlesize": 9, "legend.fontsize": 8, "svg.hashsalt": "minsurro"})
    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    # no timestamp so repeated runs write identical files
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    return path


def camel_level_sets(runs, out_dir, minimizers=None) -> list[Path]:
    """True camel landscape next to the surrogate for each K."""
    plt = _pyplot()
    written = []
    for r in runs:
        n1 = len(np.unique(r.grid[:, 0]))
        n2 = len(np.unique(r.grid[:, 1]))
        X1 = r.grid[:, 0].reshape(n1, n2)
        X2 = r.grid[:, 1].reshape(n1, n2)
        fig, axes = plt.subplots(1, 2, figsize=(8, 3), sharey=True)
        levels = np.linspace(min(r.f_true.min(), r.f_surrogate.min()), 3.0, 25)
        for ax, vals, title in ((axes[0], r.f_true, "six-hump camel"), (axes[1], r.f_surrogate, f"surrogate, K={r.K}")):
            cs = ax.contour(X1, X2, vals.reshape(n1, n2), levels=levels, linewidths=0.7)
            ax.set_title(title)
            ax.set_xlabel("$x_1$")
            if minimizers is not None:
                ax.plot(minimizers[:, 0], minimizers[:, 1], "k*", ms=7)
        axes[0].set_ylabel("$x_2$")
        xs = r.summary.get("x_star")
        if xs is not None:
            axes[1].plot([xs[0]], [xs[1]], "rx", ms=7, label="$x^*$")
            axes[1].legend(loc="upper right")
        fig.colorbar(cs, ax=axes, shrink=0.8)
        written.append(_save(fig, Path(out_dir) / f"camel_K{r.K}.png"))
        plt.close(fig)
    return written


def ocp_trajectories(reports: dict, path_obj, out_dir) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 5))
    t = np.linspace(0, 2 * np.pi, 2000)
    px, py = path_obj.position(t)
    ax.plot(px, py, "k--", lw=0.8, label="centerline")
    for mode, rep in reports.items():
        ax.plot(rep.column("px"), rep.column("py"), lw=1.0, label=mode)
    ax.set_aspect("equal")
    ax.set_xlabel("$p_x$ (m)")
    ax.set_ylabel("$p_y$ (m)")
    ax.legend(loc="upper right")
    out = _save(fig, Path(out_dir) / "ocp_trajectories.png")
    plt.close(fig)
    return out


def residual_histograms(reports: dict, out_dir) -> Path:
    """Stationarity residual at the guess and after refinement, log-spaced bins."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(8, 3))
    modes = [m for m in ("shifted_2", "learned_2") if m in reports] or list(reports)
    for ax, col, title in (
        (axes[0], "residual_at_guess", "initial guess"),
        (axes[1], "residual_after_refine", "after refinement"),
    ):
        data = [np.maximum(reports[m].column(col), 1e-16) for m in modes]
        lo = min(float(d.min()) for d in data)
        hi = max(float(d.max()) for d in data)
        bins = np.logspace(np.log10(lo), np.log10(hi * 1.01 + 1e-300), 30)
        for m, d in zip(modes, data):
            ax.hist(d, bins=bins, alpha=0.6, label=m)
        ax.set_xscale("log")
        ax.set_title(title)
        ax.set_xlabel("stationarity residual")
    axes[0].set_ylabel("steps")
    axes[0].legend()
    out = _save(fig, Path(out_dir) / "ocp_residuals.png")
    plt.close(fig)
    return out
