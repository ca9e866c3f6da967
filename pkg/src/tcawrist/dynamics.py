"""Lagrangian equations of motion of the wrist and the 7-state plant.

Two routes compute the same terms:

* the reference route here, assembled numerically from the energy
  expressions (mass matrix from the kinetic-energy quadratic form,
  Christoffel terms from finite differences of that matrix, gravity from
  finite differences of the potential);
* the fast route in :mod:`tcawrist.kernel`, which builds the mass matrix
  directly and uses an analytic gravity gradient.

``state_derivative`` and ``simulate`` run on the fast route; the tests hold
the two against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from . import kernel
from .errors import (
    DivergenceError,
    DomainError,
    DynamicsSingularityError,
    InvalidInputError,
    ModelAssemblyError,
)
from .kinematics import (
    TABLE_I_GEOMETRY,
    TCA_OFFSETS,
    WristGeometry,
    WristPose,
    _length_jacobian,
    joint_angle_partials,
)
from .tca import TABLE_I_TCA, TcaParams, tca_force

__all__ = [
    "BodyParams",
    "TABLE_I_BODY",
    "WristModel",
    "WristState",
    "EomTerms",
    "kinetic_energy",
    "potential_energy",
    "elastic_energy",
    "total_energy",
    "mass_matrix",
    "coriolis_vector",
    "gravity_vector",
    "generalized_forces",
    "eom_terms",
    "state_derivative",
    "SimulationResult",
    "simulate",
]


@dataclass(frozen=True)
class BodyParams:
    plate_mass: float  # M, kg
    link_mass: float  # m, kg
    link_inertia: tuple[float, float, float]  # diagonal of I_m, kg*m^2
    gravity: float = 9.8
    damping: tuple[float, float] = (0.0, 0.0)  # diagonal of D, N*m*s/rad

    def __post_init__(self):
        vals = (self.plate_mass, self.link_mass, *self.link_inertia, self.gravity, *self.damping)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("BodyParams must be finite")
        if self.plate_mass <= 0 or self.link_mass <= 0:
            raise InvalidInputError("masses must be > 0")
        if min(self.link_inertia) < 0 or min(self.damping) < 0:
            raise InvalidInputError("inertia and damping entries must be >= 0")


# I_m is printed as diag(82, 0.1, 82) "kg*m^2"; read as kg*mm^2.
TABLE_I_BODY = BodyParams(
    plate_mass=0.070,
    link_mass=0.030,
    link_inertia=(82e-6, 0.1e-6, 82e-6),
    gravity=9.8,
)


@dataclass(frozen=True)
class WristModel:
    """Everything the plant needs: geometry, rigid bodies and three actuators.

    ``pretension`` is the actuator elongation ``L - L0`` at the straight
    pose; the attachment offset ``h - L0 - pretension`` is subtracted from
    the geometric length before it enters the force law, so with the
    default of zero the straight pose at ambient temperature is an
    equilibrium.
    """

    geometry: WristGeometry = TABLE_I_GEOMETRY
    body: BodyParams = TABLE_I_BODY
    tcas: tuple[TcaParams, TcaParams, TcaParams] = (TABLE_I_TCA, TABLE_I_TCA, TABLE_I_TCA)
    pretension: float = 0.0

    def __post_init__(self):
        if len(self.tcas) != 3:
            raise InvalidInputError("exactly three actuators are required")

    @cached_property
    def packed(self) -> np.ndarray:
        """Flat parameter vector in the kernel layout (read-only)."""
        g, b = self.geometry, self.body
        p = [
            g.plate_radius,
            g.plate_separation,
            g.long_link,
            g.fold_angle,
            b.plate_mass,
            b.link_mass,
            *b.link_inertia,
            b.gravity,
            *b.damping,
        ]
        for tca, off in zip(self.tcas, self.attachment_offsets):
            p += [
                tca.spring_k,
                tca.damping_b,
                tca.thermal_c,
                tca.thermal_mass,
                tca.conductivity,
                tca.ambient,
                tca.rest_length,
                off,
            ]
        arr = np.array(p, dtype=float)
        assert arr.size == kernel.N_PARAMS
        arr.flags.writeable = False
        return arr

    @property
    def attachment_offsets(self) -> tuple[float, float, float]:
        h = self.geometry.plate_separation
        return tuple(h - t.rest_length - self.pretension for t in self.tcas)

    @property
    def ambient(self) -> np.ndarray:
        return np.array([t.ambient for t in self.tcas])

    def with_load(self, mass: float) -> "WristModel":
        """Add ``mass`` kg to the end plate."""
        return replace(self, body=replace(self.body, plate_mass=self.body.plate_mass + mass))

    def with_conductivity(self, conductivity: float) -> "WristModel":
        return replace(self, tcas=tuple(replace(t, conductivity=conductivity) for t in self.tcas))

    def with_parallel_tcas(self, count: int) -> "WristModel":
        return replace(self, tcas=tuple(t.in_parallel(count) for t in self.tcas))

    def without_dissipation(self) -> "WristModel":
        return replace(
            self,
            tcas=tuple(replace(t, damping_b=1e-300) for t in self.tcas),
            body=replace(self.body, damping=(0.0, 0.0)),
        )

    def rest_state(self) -> np.ndarray:
        x = np.zeros(7)
        x[4:] = self.ambient
        return x


@dataclass(frozen=True)
class WristState:
    """Plant state ``x = [q, q_dot, T]``."""

    pose: WristPose
    pose_rates: tuple[float, float] = (0.0, 0.0)
    temperatures: tuple[float, float, float] = (25.0, 25.0, 25.0)

    def __post_init__(self):
        vals = (*self.pose_rates, *self.temperatures)
        if len(self.pose_rates) != 2 or len(self.temperatures) != 3:
            raise InvalidInputError("state needs 2 rates and 3 temperatures")
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError("state must be finite")

    def to_array(self) -> np.ndarray:
        return np.array([self.pose.theta, self.pose.phi, *self.pose_rates, *self.temperatures])

    @classmethod
    def from_array(cls, x) -> "WristState":
        """Build from a raw state; a negative bending angle is folded over."""
        th, ph, thd, phd = (float(v) for v in x[:4])
        if th < 0.0:
            th, ph, thd = -th, ph + math.pi, -thd
        return cls(WristPose(th, ph), (thd, phd), tuple(float(v) for v in x[4:7]))


@dataclass(frozen=True)
class EomTerms:
    mass_matrix: np.ndarray
    coriolis: np.ndarray
    gravity: np.ndarray
    gen_force: np.ndarray


def _q(q):
    th, ph = (float(v) for v in q)
    return th, ph


def kinetic_energy(q: Sequence[float], qdot: Sequence[float], model: WristModel) -> float:
    """End plate plus three linkages, each linkage with a point-mass and an
    inertia term evaluated on its angular velocity
    ``[dd_odd S(d0 - d_even), -dd_odd C(d0 - d_even), dd_even]``."""
    th, ph = _q(q)
    thd, phd = (float(v) for v in qdot)
    g, b = model.geometry, model.body
    h, r, l2, d0 = g.plate_separation, g.plate_radius, g.long_link, g.fold_angle
    T0 = 0.125 * b.plate_mass * (
        (h * h + r * r) * thd * thd
        + (r * r * (1.0 + math.cos(th) ** 2) + 4.0 * h * h * math.sin(0.5 * th) ** 2) * phd * phd
    )
    Ix, Iy, Iz = b.link_inertia
    total = T0
    for i in range(3):
        _, d_even, dodd, deven = joint_angle_partials(th, ph, i)
        rate_odd = dodd[0] * thd + dodd[1] * phd
        rate_even = deven[0] * thd + deven[1] * phd
        w = (
            rate_odd * math.sin(d0 - d_even),
            -rate_odd * math.cos(d0 - d_even),
            rate_even,
        )
        point = 0.125 * b.link_mass * l2 * l2 * (w[1] ** 2 + w[2] ** 2)
        spin = 0.5 * (Ix * w[0] ** 2 + Iy * w[1] ** 2 + Iz * w[2] ** 2)
        total += point + spin
    return total


def potential_energy(q: Sequence[float], model: WristModel) -> float:
    """Gravity potential with the base plate horizontal (gravity along -z)."""
    th, ph = _q(q)
    g, b = model.geometry, model.body
    V = b.plate_mass * b.gravity * g.plate_separation * math.cos(0.5 * th)
    for i in range(3):
        _, d_even, _, _ = joint_angle_partials(th, ph, i)
        V += 0.5 * g.long_link * b.link_mass * b.gravity * math.cos(g.fold_angle - d_even)
    return V


def _lengths(th, ph, geom):
    s2 = math.sin(0.5 * th)
    return np.array(
        [geom.plate_separation - 2.0 * geom.plate_radius * math.sin(ph + off) * s2 for off in TCA_OFFSETS]
    )


def elastic_energy(q: Sequence[float], temperatures: Sequence[float], model: WristModel) -> float:
    """Potential of the actuator forces at frozen temperatures.

    With the temperatures held fixed the actuator force (damping aside) is
    the gradient of ``k/2 (L - L0)^2 + c (T - T_amb)(L - L0)``.
    """
    th, ph = _q(q)
    L = _lengths(th, ph, model.geometry)
    E = 0.0
    for Li, off, tca, T in zip(L, model.attachment_offsets, model.tcas, temperatures):
        stretch = Li - off - tca.rest_length
        E += 0.5 * tca.spring_k * stretch**2 + tca.thermal_c * (T - tca.ambient) * stretch
    return E


def total_energy(x, model: WristModel) -> float:
    """Kinetic + gravity + actuator potential at the state's temperatures."""
    x = np.asarray(x, dtype=float)
    return (
        kinetic_energy(x[:2], x[2:4], model)
        + potential_energy(x[:2], model)
        + elastic_energy(x[:2], x[4:7], model)
    )


def mass_matrix(q: Sequence[float], model: WristModel, *, check: bool = True) -> np.ndarray:
    """Inertia matrix read off the kinetic-energy quadratic form."""
    T_a = kinetic_energy(q, (1.0, 0.0), model)
    T_b = kinetic_energy(q, (0.0, 1.0), model)
    T_ab = kinetic_energy(q, (1.0, 1.0), model)
    m01 = T_ab - T_a - T_b
    M = np.array([[2.0 * T_a, m01], [m01, 2.0 * T_b]])
    if check and not (M[0, 0] > 0 and np.linalg.det(M) > 0):
        raise ModelAssemblyError(f"mass matrix not positive definite at q={tuple(q)}: {M}")
    return M


def coriolis_vector(q, qdot, model: WristModel, step: float = 1e-6) -> np.ndarray:
    """Centrifugal/Coriolis vector from Christoffel symbols of the first kind."""
    th, ph = _q(q)
    qd = np.asarray(qdot, dtype=float)
    dM = []
    for dq in ((step, 0.0), (0.0, step)):
        Mp = mass_matrix((th + dq[0], ph + dq[1]), model, check=False)
        Mm = mass_matrix((th - dq[0], ph - dq[1]), model, check=False)
        dM.append((Mp - Mm) / (2.0 * step))
    C = np.zeros(2)
    for k in range(2):
        for i in range(2):
            for j in range(2):
                C[k] += (dM[i][k, j] - 0.5 * dM[k][i, j]) * qd[i] * qd[j]
    return C


def gravity_vector(q, model: WristModel, step: float = 1e-6) -> np.ndarray:
    th, ph = _q(q)
    return np.array(
        [
            (potential_energy((th + step, ph), model) - potential_energy((th - step, ph), model)) / (2 * step),
            (potential_energy((th, ph + step), model) - potential_energy((th, ph - step), model)) / (2 * step),
        ]
    )


def generalized_forces(q, qdot, temperatures, model: WristModel) -> np.ndarray:
    """Actuator tensions projected onto ``(theta, phi)``.

    Tension does negative work on actuator elongation, so
    ``Q = -J^T F`` with ``J = dL/dq``.
    """
    th, ph = _q(q)
    J = _length_jacobian(th, ph, model.geometry.plate_radius)
    L = _lengths(th, ph, model.geometry)
    Ld = J @ np.asarray(qdot, dtype=float)
    F = np.array(
        [
            tca_force(L[i] - model.attachment_offsets[i], Ld[i], temperatures[i], model.tcas[i])
            for i in range(3)
        ]
    )
    return -J.T @ F


def eom_terms(x, model: WristModel) -> EomTerms:
    """Reference assembly of every term of ``M qdd + V + D qd + G = Q``."""
    x = np.asarray(x, dtype=float)
    q, qd, T = x[:2], x[2:4], x[4:7]
    return EomTerms(
        mass_matrix=mass_matrix(q, model),
        coriolis=coriolis_vector(q, qd, model),
        gravity=gravity_vector(q, model),
        gen_force=generalized_forces(q, qd, T, model),
    )


def _check_power(power):
    u = np.asarray(power, dtype=float).reshape(-1)
    if u.size != 3 or not np.all(np.isfinite(u)):
        raise InvalidInputError(f"power must be three finite values, got {power!r}")
    if np.any(u < 0.0):
        raise DomainError(f"electrical power cannot be negative, got {u}")
    return u


def state_derivative(state, power, model: WristModel) -> np.ndarray:
    """``dx/dt`` of the full plant. ``state`` is a :class:`WristState` or a raw 7-vector."""
    x = state.to_array() if isinstance(state, WristState) else np.asarray(state, dtype=float)
    if x.shape != (7,) or not np.all(np.isfinite(x)):
        raise InvalidInputError("state must be a finite 7-vector")
    u = _check_power(power)
    xdot = kernel.state_derivative(x, u, model.packed)
    if not np.all(np.isfinite(xdot)):
        raise DynamicsSingularityError(f"mass matrix singular at q=({x[0]}, {x[1]})")
    return xdot


@dataclass
class SimulationResult:
    times: np.ndarray
    states: np.ndarray  # (n, 7)
    powers: np.ndarray = field(default=None)  # (n, 3), applied from each sample on

    def poses(self) -> list[WristPose]:
        return [WristState.from_array(x).pose for x in self.states]


def simulate(
    x0,
    power_schedule: Callable[[float], Sequence[float]],
    duration: float,
    dt: float,
    model: WristModel,
    *,
    decimation: int = 1,
    hold: float | None = None,
) -> SimulationResult:
    """Fixed-step RK4 rollout of the plant.

    ``power_schedule(t)`` is sampled at every step, or every ``hold``
    seconds (zero-order hold) when given. States are recorded every
    ``decimation`` steps, starting with ``x0`` at ``t = 0``.
    """
    if not (dt > 0 and dt <= 1e-3 + 1e-15):
        raise InvalidInputError(f"plant step must be in (0, 1 ms], got {dt}")
    if duration < 0 or not math.isfinite(duration):
        raise InvalidInputError(f"duration must be >= 0, got {duration}")
    x = (x0.to_array() if isinstance(x0, WristState) else np.array(x0, dtype=float)).copy()
    p = model.packed
    nsteps = int(round(duration / dt))
    per_hold = 1 if hold is None else max(1, int(round(hold / dt)))
    times, states, powers = [], [], []
    u = _check_power(power_schedule(0.0))
    n = 0
    while n <= nsteps:
        t = n * dt
        if n % per_hold == 0:
            u = _check_power(power_schedule(t))
        if n % decimation == 0:
            times.append(t)
            states.append(x.copy())
            powers.append(u.copy())
        if n == nsteps:
            break
        # integrate up to the next hold or record boundary
        nxt = min(nsteps, (n // per_hold + 1) * per_hold, (n // decimation + 1) * decimation)
        x, failed = kernel.rk4_integrate(x, u, dt, nxt - n, p)
        if failed >= 0:
            t_fail = (n + failed) * dt
            raise DivergenceError(f"plant state became non-finite after t = {t_fail:.6f} s", time=t_fail)
        n = nxt
    return SimulationResult(np.array(times), np.array(states), np.array(powers))
