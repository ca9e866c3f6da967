"""Running configured experiments and writing run directories.

A run directory holds ``config.ini`` (verbatim copy), ``series.csv``,
``metrics.json`` and, unless disabled, the SVG figures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..control.loop import TrajectoryLog, closed_loop_run, holding_state
from ..control.nmpc import NmpcController
from ..control.pid import PidController
from ..control.reference import make_trajectory
from ..errors import DivergenceError
from .config import ExperimentConfig, build_model
from .metrics import MetricsReport, compute_metrics
from .plots import emit_plots
from .series_io import write_series

__all__ = [
    "OpenLoopDrive",
    "RunResult",
    "make_controller",
    "run_open_loop",
    "run_closed_loop",
    "run_series",
    "run_experiment",
    "dominant_frequency",
]


class OpenLoopDrive:
    """Replays the configured sinusoidal powers; ignores feedback."""

    def __init__(self, traj_cfg):
        self.traj = traj_cfg

    def control(self, t, measured, x_est, trajectory):
        return self.traj.power(t)


def make_controller(cfg: ExperimentConfig):
    c = cfg.controller
    if c.kind == "nmpc":
        return NmpcController(c.mpc, build_model(cfg, with_load=c.model_knows_load))
    if c.kind == "pid":
        return PidController(c.pid, cfg.geometry, c.mpc.u_min, c.mpc.u_max, c.baseline, cfg.sim.control_dt)
    return OpenLoopDrive(cfg.trajectory)


def run_open_loop(cfg: ExperimentConfig) -> TrajectoryLog:
    model = build_model(cfg)
    s = cfg.sim
    return closed_loop_run(
        OpenLoopDrive(cfg.trajectory), None, s.duration, model,
        control_dt=s.control_dt, plant_dt=s.plant_dt,
    )


def run_closed_loop(cfg: ExperimentConfig, seed: int | None = None) -> TrajectoryLog:
    model = build_model(cfg)
    s = cfg.sim
    traj = make_trajectory(cfg.trajectory.kind, cfg.trajectory.params)
    x0 = u0 = None
    if s.perfect_start:
        x0, hold_power = holding_state(traj(0.0), model)
        u0 = np.clip(hold_power, cfg.controller.mpc.u_min, cfg.controller.mpc.u_max)
    return closed_loop_run(
        make_controller(cfg), traj, s.duration, model,
        control_dt=s.control_dt, plant_dt=s.plant_dt, x0=x0, u0=u0,
        noise_std=s.noise, seed=s.seed if seed is None else seed,
        rate_cutoff=cfg.controller.rate_cutoff,
    )


def run_series(cfg: ExperimentConfig, seed: int | None = None) -> TrajectoryLog:
    if cfg.controller.kind == "open_loop":
        return run_open_loop(cfg)
    return run_closed_loop(cfg, seed)


@dataclass
class RunResult:
    directory: Path
    series: TrajectoryLog
    metrics: MetricsReport
    diverged: bool = False


def _write_run(out: Path, cfg: ExperimentConfig, series, metrics, seed, extra):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.source_text)
    write_series(series, out / "series.csv")
    doc = {"name": cfg.name, "controller": cfg.controller.kind, "trajectory": cfg.trajectory.kind,
           "seed": seed, **metrics.to_dict(), **extra}
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if cfg.plots:
        emit_plots(series, out)


def run_experiment(cfg: ExperimentConfig, out_dir=None, seed: int | None = None) -> RunResult:
    """Run ``cfg`` and write its run directory.

    On plant divergence the partial series is still written (with
    ``"diverged": true`` in the metrics) before the error is re-raised.
    """
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    seed = cfg.sim.seed if seed is None else seed
    try:
        series = run_series(cfg, seed)
    except DivergenceError as exc:
        partial = getattr(exc, "partial", TrajectoryLog.empty())
        _write_run(out, cfg, partial, compute_metrics(partial), seed,
                   {"diverged": True, "divergence_time": exc.time, "divergence_tick": exc.tick})
        raise
    metrics = compute_metrics(series)
    _write_run(out, cfg, series, metrics, seed, {"diverged": False})
    return RunResult(out, series, metrics)


def dominant_frequency(signal, dt: float, discard: float = 0.0) -> float:
    """Frequency of the largest non-DC FFT bin after dropping ``discard`` seconds."""
    x = np.asarray(signal, dtype=float)[int(round(discard / dt)):]
    if x.size < 4:
        return math.nan
    spec = np.abs(np.fft.rfft(x - x.mean()))
    spec[0] = 0.0
    return float(np.fft.rfftfreq(x.size, dt)[int(np.argmax(spec))])
