"""Reference pose generators.

Closed shapes are traced counterclockwise at constant speed in the top-view
plane ``(theta cos phi, theta sin phi)`` and start on the positive x axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import ConfigError
from ..kinematics import WristPose, pose_from_tilt, wrap_angle

__all__ = ["ReferenceParams", "reference_trajectory", "make_trajectory", "KINDS", "shape_vertices"]

KINDS = ("circle", "square", "star", "hold", "stepwise")


@dataclass(frozen=True)
class ReferenceParams:
    amplitude: float = math.radians(15.0)  # rad
    period: float = 60.0  # s
    hold_pose: WristPose = WristPose(0.0, 0.0)
    steps: tuple[WristPose, ...] = ()  # stepwise: poses held for period / len(steps) each


def shape_vertices(kind: str, amplitude: float) -> np.ndarray:
    """Closed polygon (first vertex repeated) in the top-view plane."""
    a = amplitude
    if kind == "square":
        pts = [(a, 0.0), (a, a), (-a, a), (-a, -a), (a, -a), (a, 0.0)]
    elif kind == "star":
        ang = np.arange(11) * math.pi / 5.0
        rad = np.where(np.arange(11) % 2 == 0, a, 0.5 * a)
        pts = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        pts[-1] = pts[0]
    else:
        raise ConfigError(f"no polygon for trajectory kind {kind!r}")
    return np.asarray(pts, dtype=float)


def _along(vertices: np.ndarray, frac: float) -> tuple[float, float]:
    seg = np.diff(vertices, axis=0)
    lens = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lens)])
    s = frac * cum[-1]
    i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lens) - 1)
    w = (s - cum[i]) / lens[i]
    x, y = vertices[i] + w * seg[i]
    return float(x), float(y)


def reference_trajectory(kind: str, t: float, params: ReferenceParams = ReferenceParams()) -> WristPose:
    if t < 0:
        raise ConfigError(f"reference time must be >= 0, got {t}")
    if kind not in KINDS:
        raise ConfigError(f"unknown trajectory kind {kind!r}; expected one of {', '.join(KINDS)}")
    if kind == "hold":
        return params.hold_pose
    if not params.period > 0:
        raise ConfigError("trajectory period must be > 0")
    frac = (t / params.period) % 1.0
    if kind == "circle":
        return WristPose(params.amplitude, wrap_angle(2.0 * math.pi * frac))
    if kind == "stepwise":
        if not params.steps:
            raise ConfigError("stepwise trajectory needs at least one pose")
        return params.steps[min(int(frac * len(params.steps)), len(params.steps) - 1)]
    return pose_from_tilt(*_along(shape_vertices(kind, params.amplitude), frac))


def make_trajectory(kind: str, params: ReferenceParams = ReferenceParams()) -> Callable[[float], WristPose]:
    if kind not in KINDS:
        raise ConfigError(f"unknown trajectory kind {kind!r}; expected one of {', '.join(KINDS)}")
    return lambda t: reference_trajectory(kind, t, params)
