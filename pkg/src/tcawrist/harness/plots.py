"""Static SVG figures for a run: angles over time, top view and powers.

Output is byte-stable for identical input: the SVG id salt is fixed and
no date is embedded.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import numpy as np
from matplotlib.figure import Figure

from ..control.loop import TrajectoryLog

__all__ = ["angles_figure", "top_view_figure", "power_figure", "emit_plots", "PLOT_FILES"]

PLOT_FILES = ("angles.svg", "top_view.svg", "power.svg")
_RC = {"svg.hashsalt": "tcawrist", "svg.fonttype": "path"}


def _tilt(theta, phi):
    th = np.degrees(theta)
    return th * np.cos(phi), th * np.sin(phi)


def angles_figure(s: TrajectoryLog) -> Figure:
    fig = Figure(figsize=(7, 5))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    ax1.plot(s.t, np.degrees(s.ref[:, 0]), "k--", lw=1, label="reference")
    ax1.plot(s.t, np.degrees(s.pose[:, 0]), "C0", lw=1.2, label="actual")
    ax1.set_ylabel("theta [deg]")
    ax1.legend(loc="upper right")
    ax2.plot(s.t, np.degrees(s.ref[:, 1]), "k--", lw=1)
    ax2.plot(s.t, np.degrees(s.pose[:, 1]), "C1", lw=1.2)
    ax2.set_ylabel("phi [deg]")
    ax2.set_xlabel("t [s]")
    fig.tight_layout()
    return fig


def top_view_figure(s: TrajectoryLog) -> Figure:
    fig = Figure(figsize=(5, 5))
    ax = fig.subplots()
    if np.isfinite(s.ref).all() and len(s):
        ax.plot(*_tilt(s.ref[:, 0], s.ref[:, 1]), "k--", lw=1, label="reference")
    ax.plot(*_tilt(s.pose[:, 0], s.pose[:, 1]), "C0", lw=1.2, label="actual")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("theta cos(phi) [deg]")
    ax.set_ylabel("theta sin(phi) [deg]")
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def power_figure(s: TrajectoryLog) -> Figure:
    fig = Figure(figsize=(7, 3.5))
    ax = fig.subplots()
    for i in range(3):
        ax.step(s.t, s.powers[:, i], where="post", lw=1, label=f"P{i + 1}")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("power [W]")
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def emit_plots(series: TrajectoryLog, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    with matplotlib.rc_context(_RC):
        for name, make in zip(PLOT_FILES, (angles_figure, top_view_figure, power_figure)):
            path = out_dir / name
            make(series).savefig(path, format="svg", metadata={"Date": None})
            paths.append(path)
    return paths
