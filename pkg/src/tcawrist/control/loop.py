"""Closed-loop simulation at a fixed control rate.

Every tick the pose is measured (optionally with Gaussian noise), the
thermal observer is advanced with the power applied over the previous
tick, pose rates are estimated by filtered differentiation in the top-view
plane, the controller is called, and its output is held over the plant
substeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import kernel
from ..dynamics import WristModel
from ..errors import DivergenceError, InvalidInputError
from ..kinematics import WristPose, inverse_kinematics
from .observer import ObserverState, observer_step
from .qp import solve_box_qp

__all__ = ["TrajectoryLog", "RateFilter", "closed_loop_run", "holding_state"]


@dataclass
class TrajectoryLog:
    """Samples taken at each control tick (SI units, angles in rad)."""

    t: np.ndarray
    ref: np.ndarray  # (n, 2) theta, phi
    pose: np.ndarray  # (n, 2)
    lengths: np.ndarray  # (n, 3)
    temperatures: np.ndarray  # (n, 3)
    powers: np.ndarray  # (n, 3)

    def __len__(self):
        return len(self.t)

    @classmethod
    def empty(cls) -> "TrajectoryLog":
        return cls(np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))


class RateFilter:
    """First-order low-pass on finite differences of the tilt vector."""

    def __init__(self, dt: float, cutoff: float = 1.0):
        if not (dt > 0 and cutoff > 0):
            raise InvalidInputError("rate filter needs dt > 0 and cutoff > 0")
        self.alpha = dt / (dt + 1.0 / (2.0 * math.pi * cutoff))
        self.dt = dt
        self.prev = None
        self.vel = np.zeros(2)

    def update(self, pose: WristPose) -> tuple[float, float]:
        xy = pose.theta * np.array([math.cos(pose.phi), math.sin(pose.phi)])
        if self.prev is not None:
            self.vel += self.alpha * ((xy - self.prev) / self.dt - self.vel)
        self.prev = xy
        th = pose.theta
        if th < 1e-4:
            return float(np.linalg.norm(self.vel)), 0.0
        thd = float(xy @ self.vel) / th
        phd = float(xy[0] * self.vel[1] - xy[1] * self.vel[0]) / (th * th)
        return thd, phd


def holding_state(pose: WristPose, model: WristModel) -> tuple[np.ndarray, np.ndarray]:
    """Static equilibrium at ``pose`` with the least actuator heating.

    The angular accelerations at rest are affine in the temperatures, so
    the smallest non-negative temperature rise that cancels them is a tiny
    QP. Returns the plant state and the steady holding powers.
    """
    p = model.packed
    x = model.rest_state()
    x[0], x[1] = pose.theta, pose.phi
    zero = np.zeros(3)
    a0 = kernel.state_derivative(x, zero, p)[2:4]
    B = np.empty((2, 3))
    for i in range(3):
        xi = x.copy()
        xi[4 + i] += 1.0
        B[:, i] = kernel.state_derivative(xi, zero, p)[2:4] - a0
    # min |dT|^2 + w |a0 + B dT|^2 with dT >= 0; w large enforces equilibrium
    w = 1e8
    H = 2.0 * (np.eye(3) + w * B.T @ B)
    g = 2.0 * w * B.T @ a0
    dT = solve_box_qp(H, g, np.zeros(3), np.full(3, np.inf), max_iter=200).x
    x[4:] += dT
    lam = np.array([t.conductivity for t in model.tcas])
    return x, lam * dT


def closed_loop_run(
    controller,
    trajectory: Callable[[float], WristPose] | None,
    duration: float,
    model: WristModel,
    *,
    control_dt: float = 0.1,
    plant_dt: float = 1e-3,
    x0=None,
    u0=None,
    noise_std: float = 0.0,
    seed: int = 0,
    rate_cutoff: float = 1.0,
    observer_tcas=None,
) -> TrajectoryLog:
    """Run ``controller`` against the RK4 plant for ``duration`` seconds.

    ``controller.control(t, measured_pose, x_est, trajectory)`` must return
    three powers. ``noise_std`` is the pose-measurement noise in radians.
    With ``trajectory=None`` (open-loop drive) the reference is logged as NaN.
    ``u0`` is the power taken as applied before the start (the controller's
    first previous input). On divergence a ``DivergenceError`` carrying the tick index and the
    partial log (``exc.partial``) is raised.
    """
    if not (0 < plant_dt <= 1e-3 + 1e-15):
        raise InvalidInputError("plant substep must be in (0, 1 ms]")
    substeps = int(round(control_dt / plant_dt))
    if substeps < 1 or abs(substeps * plant_dt - control_dt) > 1e-9:
        raise InvalidInputError("control period must be a whole number of plant substeps")
    if duration < 0 or not math.isfinite(duration):
        raise InvalidInputError("duration must be >= 0")
    ticks = int(math.floor(duration / control_dt + 1e-9))
    if ticks == 0:
        return TrajectoryLog.empty()

    p = model.packed
    x = model.rest_state() if x0 is None else np.array(x0, dtype=float)
    tcas = model.tcas if observer_tcas is None else observer_tcas
    obs = ObserverState(tuple(float(v) for v in x[4:7]))
    rng = np.random.default_rng(seed)
    rates = RateFilter(control_dt, rate_cutoff)
    if hasattr(controller, "reset"):
        controller.reset(u0)

    geom = model.geometry
    rows = np.empty((ticks, 14))
    u_prev = None
    for k in range(ticks):
        t = k * control_dt
        true_pose = WristPose.from_any(x[0], x[1])
        if noise_std > 0:
            n = rng.normal(0.0, noise_std, 2)
            meas = WristPose.from_any(true_pose.theta + n[0], true_pose.phi + n[1])
        else:
            meas = true_pose
        if u_prev is not None:
            obs = observer_step(obs, u_prev, control_dt, tcas)
        thd, phd = rates.update(meas)
        x_est = np.array([meas.theta, meas.phi, thd, phd, *obs.estimated_temperatures])
        u = np.asarray(controller.control(t, meas, x_est, trajectory), dtype=float)
        rows[k, 0] = t
        if trajectory is None:
            rows[k, 1:3] = math.nan
        else:
            ref = trajectory(t)
            rows[k, 1:3] = (ref.theta, ref.phi)
        rows[k, 3:5] = (true_pose.theta, true_pose.phi)
        rows[k, 5:8] = inverse_kinematics(true_pose, geom)
        rows[k, 8:11] = x[4:7]
        rows[k, 11:14] = u
        x, failed = kernel.rk4_integrate(x, u, plant_dt, substeps, p)
        if failed >= 0:
            part = _log(rows[: k + 1])
            exc = DivergenceError(
                f"plant diverged during control tick {k} (t = {t + (failed + 1) * plant_dt:.3f} s)",
                time=t + (failed + 1) * plant_dt,
                tick=k,
            )
            exc.partial = part
            raise exc
        u_prev = u
    return _log(rows)


def _log(rows) -> TrajectoryLog:
    return TrajectoryLog(
        t=rows[:, 0].copy(),
        ref=rows[:, 1:3].copy(),
        pose=rows[:, 3:5].copy(),
        lengths=rows[:, 5:8].copy(),
        temperatures=rows[:, 8:11].copy(),
        powers=rows[:, 11:14].copy(),
    )
