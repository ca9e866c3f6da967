"""Per-actuator PID baseline on TCA length errors.

Each actuator runs its own loop on ``e_i = L_i(measured) - L_i(reference)``
in metres: heating contracts an actuator, so a measured length above the
reference calls for more power. Gains map metres of length error to watts.
The Euclidean norm of the length-error vector is reported as a scalar
tracking metric.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidInputError
from ..kinematics import TABLE_I_GEOMETRY, WristGeometry, WristPose, inverse_kinematics

__all__ = ["PidGains", "PidState", "PidController", "pid_step", "length_error"]


@dataclass(frozen=True)
class PidGains:
    kp: float = 48.0  # W/m
    ki: float = 0.05  # W/(m*s)
    kd: float = 7.2  # W*s/m
    integral_clamp: float = 1.0  # W

    def __post_init__(self):
        vals = (self.kp, self.ki, self.kd, self.integral_clamp)
        if not all(math.isfinite(v) and v >= 0.0 for v in vals):
            raise InvalidInputError(f"PID gains must be finite and >= 0, got {vals}")


@dataclass(frozen=True)
class PidState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))  # integral term, W
    prev_error: np.ndarray | None = None  # m
    error_norm: float = 0.0  # m, last Euclidean length-error norm


def length_error(reference: WristPose, measured: WristPose, geom: WristGeometry = TABLE_I_GEOMETRY) -> np.ndarray:
    return np.array(inverse_kinematics(measured, geom)) - np.array(inverse_kinematics(reference, geom))


def pid_step(
    reference: WristPose,
    measured: WristPose,
    gains: PidGains,
    state: PidState,
    dt: float = 0.1,
    *,
    geometry: WristGeometry = TABLE_I_GEOMETRY,
    u_min=0.0,
    u_max=5.0,
    baseline=0.0,
) -> tuple[np.ndarray, PidState]:
    """One PID update. Returns the clamped powers and the new state."""
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    e = length_error(reference, measured, geometry)
    integral = np.clip(state.integral + gains.ki * e * dt, -gains.integral_clamp, gains.integral_clamp)
    deriv = np.zeros(3) if state.prev_error is None else (e - state.prev_error) / dt
    u = baseline + gains.kp * e + integral + gains.kd * deriv
    u = np.clip(u, u_min, u_max)
    return u, PidState(integral, e, float(np.linalg.norm(e)))


class PidController:
    """Stateful wrapper over ``pid_step`` for the closed loop."""

    def __init__(self, gains: PidGains = PidGains(), geometry: WristGeometry = TABLE_I_GEOMETRY,
                 u_min=0.0, u_max=5.0, baseline=0.0, dt: float = 0.1):
        self.gains = gains
        self.geometry = geometry
        self.u_min = np.broadcast_to(np.asarray(u_min, dtype=float), (3,)).copy()
        self.u_max = np.broadcast_to(np.asarray(u_max, dtype=float), (3,)).copy()
        if np.any(self.u_min < 0) or np.any(self.u_min >= self.u_max):
            raise InvalidInputError("need 0 <= u_min < u_max")
        self.baseline = baseline
        self.dt = dt
        self.state = PidState()

    def reset(self, prev_u=None):
        self.state = PidState()

    def control(self, t, measured: WristPose, x_est, trajectory) -> np.ndarray:
        u, self.state = pid_step(
            trajectory(t), measured, self.gains, self.state, self.dt,
            geometry=self.geometry, u_min=self.u_min, u_max=self.u_max, baseline=self.baseline,
        )
        return u

    def with_gains(self, **kw) -> "PidController":
        return PidController(replace(self.gains, **kw), self.geometry, self.u_min, self.u_max, self.baseline, self.dt)
