"""Static SVG figures for a finished run."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .diagnostics import record_array  # noqa: E402
from .flow import saved_frame_indices  # noqa: E402
from .geometry import embed  # noqa: E402

plt.rcParams["svg.hashsalt"] = "pancake"

_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def profiles_svg(traj, path, max_curves: int = 12):
    idx = saved_frame_indices(traj)
    if len(idx) > max_curves:
        idx = [idx[i] for i in np.linspace(0, len(idx) - 1, max_curves).round().astype(int)]
    fig, ax = plt.subplots(figsize=(6, 6))
    cmap = plt.get_cmap("viridis")
    for k, i in enumerate(idx):
        f = traj.frames[i]
        p = embed(f, traj.config.diff_backend).points
        p = np.vstack([p, p[:1]])
        ax.plot(p[:, 0], p[:, 1], lw=0.8, color=cmap(k / max(1, len(idx) - 1)),
                label=f"t = {f.t - traj.T_ext:.3g}")
    ax.set_aspect("equal")
    ax.set_xlabel("x (axis)")
    ax.set_ylabel("y")
    ax.legend(fontsize=6, loc="upper right")
    _save(fig, path)


def margins_svg(report, path):
    fig, ax = plt.subplots(figsize=(8, 5))
    for name, (t, m) in report.series.items():
        if t.size > 1:
            ax.plot(t, m, lw=0.8, label=name)
        else:
            ax.plot(t, m, "o", ms=3, label=name)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_xlabel("t")
    ax.set_ylabel("margin (positive = satisfied)")
    ax.legend(fontsize=6, ncol=2)
    _save(fig, path)


def area_fit_svg(traj, report, path):
    t = record_array(traj.records, "t")
    A = record_array(traj.records, "A")
    fig, ax = plt.subplots(figsize=(6, 4))
    s = t < 0
    ax.plot(np.log(-t[s]), A[s] / (2 * np.pi) + t[s], lw=0.8, label="A/2pi + t")
    try:
        fit = report.fit("area_log_law")
    except KeyError:
        fit = None
    if fit is not None:
        lo, hi = fit.window
        x = np.linspace(np.log(-hi), np.log(-lo), 50)
        a, b = fit.coefficients["a"], fit.coefficients["b"]
        ax.plot(x, a * x + b, "--", lw=1.0, label=f"fit a = {a:.3f}, b = {b:.3f}")
    ax.set_xlabel("log(-t)")
    ax.legend(fontsize=7)
    _save(fig, path)
