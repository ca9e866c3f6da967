"""Tracking-error metrics and run comparison."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..control.loop import TrajectoryLog
from ..kinematics import wrap_angle

__all__ = ["PHI_GATE", "MetricsReport", "tracking_errors", "compute_metrics", "compare_runs", "METRIC_NAMES"]

PHI_GATE = math.radians(2.0)
METRIC_NAMES = ("rmse_theta", "mae_theta", "me_theta", "rmse_phi", "mae_phi", "me_phi")


@dataclass(frozen=True)
class MetricsReport:
    """Errors in degrees over the samples that have a reference."""

    rmse_theta: float = 0.0
    mae_theta: float = 0.0
    me_theta: float = 0.0
    rmse_phi: float = 0.0
    mae_phi: float = 0.0
    me_phi: float = 0.0
    samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**{k: d[k] for k in (*METRIC_NAMES, "samples") if k in d})


def tracking_errors(ref_theta, ref_phi, theta, phi, gate: float = PHI_GATE):
    """Per-sample errors in degrees.

    The direction error is wrapped to (-180, 180] and zeroed where either
    bend is below ``gate``.
    """
    ref_theta, ref_phi, theta, phi = (np.asarray(a, dtype=float) for a in (ref_theta, ref_phi, theta, phi))
    e_th = np.degrees(theta - ref_theta)
    e_ph = np.degrees(wrap_angle(phi - ref_phi))
    e_ph = np.where(np.minimum(theta, ref_theta) < gate, 0.0, e_ph)
    return e_th, e_ph


def _stats(e):
    a = np.abs(e)
    return math.sqrt(float(np.mean(e * e))), float(np.mean(a)), float(np.max(a))


def compute_metrics(series: TrajectoryLog) -> MetricsReport:
    ok = np.all(np.isfinite(series.ref), axis=1) if len(series) else np.zeros(0, dtype=bool)
    if not ok.any():
        return MetricsReport()
    e_th, e_ph = tracking_errors(series.ref[ok, 0], series.ref[ok, 1], series.pose[ok, 0], series.pose[ok, 1])
    return MetricsReport(*_stats(e_th), *_stats(e_ph), samples=int(ok.sum()))


def compare_runs(a: MetricsReport, b: MetricsReport) -> dict:
    """Improvement of candidate ``a`` over baseline ``b`` in percent.

    ``100 (b - a) / b`` per metric; ``None`` where the baseline is zero.
    """
    out = {}
    for name in METRIC_NAMES:
        va, vb = getattr(a, name), getattr(b, name)
        out[name] = None if vb == 0 else 100.0 * (vb - va) / vb
    return out
