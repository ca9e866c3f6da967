"""Geometry of the 3RRRR parallel wrist.

The end plate is modelled as a hemisphere rolling on a base hemisphere.
Pose is ``(theta, phi)``: bending angle and bending direction. Actuator
``i`` sits at azimuth offset ``(0, -120, +120)`` degrees, so actuator 1 is
shortest when the wrist bends toward ``phi = 90`` degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import (
    GeometryInfeasibleError,
    InconsistentLengthsError,
    InfeasibleLengthsError,
    InvalidInputError,
)

__all__ = [
    "TCA_OFFSETS",
    "LINKAGE_OFFSETS",
    "WristGeometry",
    "WristPose",
    "TcaLengths",
    "HomogeneousTransform",
    "TABLE_I_GEOMETRY",
    "wrap_angle",
    "inverse_kinematics",
    "forward_kinematics",
    "end_plate_transform",
    "default_fold_angle",
    "joint_angles",
    "joint_angle_partials",
    "printed_even_joint_angle",
    "joint_rates",
    "linkage_transform",
    "length_jacobian",
    "tilt_vector",
    "pose_from_tilt",
]

TWO_PI_3 = 2.0 * math.pi / 3.0
TCA_OFFSETS = (0.0, -TWO_PI_3, TWO_PI_3)
LINKAGE_OFFSETS = (0.0, TWO_PI_3, 2.0 * TWO_PI_3)


def wrap_angle(angle):
    """Wrap to the half-open interval (-pi, pi]. Works on scalars and arrays."""
    wrapped = angle - 2.0 * np.pi * np.ceil((angle - np.pi) / (2.0 * np.pi))
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def default_fold_angle(geom: "WristGeometry | None" = None, *, plate_radius=None, long_link=None) -> float:
    """Fold angle between long and short links at rest: ``l2 sin(d0) = 2 r``."""
    r = geom.plate_radius if geom is not None else plate_radius
    l2 = geom.long_link if geom is not None else long_link
    if 2.0 * r > l2:
        raise GeometryInfeasibleError(f"2r = {2 * r:.6g} m exceeds long link l2 = {l2:.6g} m")
    return math.asin(min(1.0, 2.0 * r / l2))


@dataclass(frozen=True)
class WristGeometry:
    plate_radius: float  # r, m
    plate_separation: float  # h, m
    short_link: float  # l1, m
    long_link: float  # l2, m
    theta_max: float = math.radians(50.0)

    def __post_init__(self):
        for name in ("plate_radius", "plate_separation", "short_link", "long_link"):
            v = getattr(self, name)
            if not math.isfinite(v) or v <= 0.0:
                raise InvalidInputError(f"WristGeometry.{name} must be finite and > 0, got {v}")
        if 2.0 * self.plate_radius > self.long_link:
            raise GeometryInfeasibleError("plate diameter exceeds the long link length")

    @property
    def fold_angle(self) -> float:
        return default_fold_angle(self)


# l1 is not listed with the prototype constants; 30 mm is an assumed value.
TABLE_I_GEOMETRY = WristGeometry(
    plate_radius=0.050,
    plate_separation=0.150,
    short_link=0.030,
    long_link=0.180,
)


@dataclass(frozen=True)
class WristPose:
    """Bending angle ``theta >= 0`` and direction ``phi`` in (-pi, pi].

    ``phi`` is wrapped on construction and forced to 0 at the straight pose.
    Use :meth:`from_any` to fold a negative bending angle onto the opposite
    direction.
    """

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise InvalidInputError(f"pose must be finite, got ({self.theta}, {self.phi})")
        if self.theta < 0.0:
            raise InvalidInputError(f"bending angle must be >= 0, got {self.theta}")
        phi = 0.0 if self.theta == 0.0 else wrap_angle(self.phi)
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "phi", float(phi))

    @classmethod
    def from_any(cls, theta: float, phi: float) -> "WristPose":
        if theta < 0.0:
            return cls(-theta, phi + math.pi)
        return cls(theta, phi)

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float) -> "WristPose":
        return cls.from_any(math.radians(theta_deg), math.radians(phi_deg))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.phi])

    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.theta), math.degrees(self.phi)


class TcaLengths(NamedTuple):
    L1: float
    L2: float
    L3: float


@dataclass(frozen=True)
class HomogeneousTransform:
    matrix: np.ndarray  # 4x4

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def __matmul__(self, other: "HomogeneousTransform") -> "HomogeneousTransform":
        return HomogeneousTransform(self.matrix @ other.matrix)


def _rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def _rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s, 0], [0, 1.0, 0, 0], [-s, 0, c, 0], [0, 0, 0, 1.0]])


def _rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 1.0]])


def _trans(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def inverse_kinematics(pose: WristPose, geom: WristGeometry) -> TcaLengths:
    """Actuator lengths ``L_i = h - 2 r sin(phi + offset_i) sin(theta/2)``."""
    s = math.sin(0.5 * pose.theta)
    h, r = geom.plate_separation, geom.plate_radius
    return TcaLengths(*(h - 2.0 * r * math.sin(pose.phi + off) * s for off in TCA_OFFSETS))


def forward_kinematics(lengths, geom: WristGeometry, *, closure_tol: float = 1e-9) -> WristPose:
    """Recover the pose from three actuator lengths.

    The bending angle uses the spread of the lengths,
    ``sum_{i<j} (L_i - L_j)^2 / 2 = 9 r^2 sin^2(theta/2)``, and the
    direction uses a two-argument arctangent so every azimuth is reachable.
    """
    L1, L2, L3 = (float(v) for v in lengths)
    if not all(math.isfinite(v) for v in (L1, L2, L3)):
        raise InvalidInputError("lengths must be finite")
    h, r = geom.plate_separation, geom.plate_radius
    if abs(L1 + L2 + L3 - 3.0 * h) > closure_tol:
        raise InconsistentLengthsError(
            f"sum of lengths {L1 + L2 + L3:.12g} m differs from 3h = {3 * h:.12g} m"
        )
    d12, d13, d23 = L1 - L2, L1 - L3, L2 - L3
    radicand = 0.5 * (d12 * d12 + d13 * d13 + d23 * d23)
    if radicand < -1e-12:
        raise InfeasibleLengthsError(f"negative radicand {radicand}")
    ratio = math.sqrt(max(radicand, 0.0)) / (3.0 * r)
    if ratio > 1.0 + 1e-12:
        raise InfeasibleLengthsError(f"length spread implies sin(theta/2) = {ratio:.6g} > 1")
    theta = 2.0 * math.asin(min(ratio, 1.0))
    if theta == 0.0:
        return WristPose(0.0, 0.0)
    phi = math.atan2(L2 + L3 - 2.0 * L1, math.sqrt(3.0) * (L2 - L3))
    return WristPose(theta, phi)


def end_plate_transform(pose: WristPose, geom: WristGeometry) -> HomogeneousTransform:
    """Base-to-end-plate transform ``Rz(phi) Ry(theta/2) Tz(h) Ry(theta/2) Rz(-phi)``."""
    half = 0.5 * pose.theta
    T = (
        _rot_z(pose.phi)
        @ _rot_y(half)
        @ _trans(0.0, 0.0, geom.plate_separation)
        @ _rot_y(half)
        @ _rot_z(-pose.phi)
    )
    return HomogeneousTransform(T)


def joint_angle_partials(theta: float, phi: float, linkage_index: int):
    """Joint angles of one supporting linkage and their pose partials.

    Returns ``(d_odd, d_even, (dodd_dtheta, dodd_dphi), (deven_dtheta, deven_dphi))``.

    With ``phi_i = phi + 2 pi i / 3``, ``t = tan(theta/2)`` and
    ``w = sqrt(1 + cos(phi_i)^2 t^2)``::

        d_odd  = atan(-cos(phi_i) t)
        d_even = atan(-tan(phi_i) sin(d_odd)) = atan(sin(phi_i) t / w)

    ``d_even`` is the angle for which the linkage chain
    ``Ry(d_odd) Rx(2 d_even) Ry(d_odd)`` reproduces the end-plate rotation.
    It is smooth everywhere, bounded by ``theta/2`` and zero at the
    straight pose. The closed form with ``sin(theta)`` in place of
    ``sin(d_odd)`` is available as :func:`printed_even_joint_angle`.
    """
    phi_i = phi + LINKAGE_OFFSETS[linkage_index]
    cp, sp = math.cos(phi_i), math.sin(phi_i)
    c2 = math.cos(0.5 * theta)
    t2 = math.tan(0.5 * theta)

    u = -cp * t2
    den = 1.0 + u * u
    w = math.sqrt(den)
    d_odd = math.atan(u)
    dodd = (-0.5 * cp / (c2 * c2) / den, sp * t2 / den)
    d_even = math.atan(sp * t2 / w)
    deven = (0.5 * sp / w, cp * t2 / w)
    return d_odd, d_even, dodd, deven


def printed_even_joint_angle(theta: float, phi: float, linkage_index: int) -> float:
    """``atan(tan(phi_i) sin(theta))`` in its two-argument form.

    Kept for comparison only: it does not close the linkage chain, swings
    to 90 degrees for an arbitrarily small bend perpendicular to the
    linkage, and has no limit at the straight pose (0 by convention).
    """
    if linkage_index not in (0, 1, 2):
        raise InvalidInputError(f"linkage index must be 0, 1 or 2, got {linkage_index}")
    if theta == 0.0:
        return 0.0
    phi_i = phi + LINKAGE_OFFSETS[linkage_index]
    return math.atan2(math.sin(phi_i) * math.sin(theta), math.cos(phi_i))


def joint_angles(pose: WristPose, linkage_index: int) -> tuple[float, float]:
    """``(delta_{2i+1}, delta_{2i+2})`` for linkage ``i`` in {0, 1, 2}."""
    if linkage_index not in (0, 1, 2):
        raise InvalidInputError(f"linkage index must be 0, 1 or 2, got {linkage_index}")
    d_odd, d_even, _, _ = joint_angle_partials(pose.theta, pose.phi, linkage_index)
    return d_odd, d_even


def joint_rates(pose: WristPose, pose_rates, linkage_index: int) -> tuple[float, float]:
    """Time derivatives of :func:`joint_angles` along ``(theta_dot, phi_dot)``."""
    if linkage_index not in (0, 1, 2):
        raise InvalidInputError(f"linkage index must be 0, 1 or 2, got {linkage_index}")
    thd, phd = pose_rates
    if not (math.isfinite(thd) and math.isfinite(phd)):
        raise InvalidInputError("pose rates must be finite")
    _, _, dodd, deven = joint_angle_partials(pose.theta, pose.phi, linkage_index)
    return dodd[0] * thd + dodd[1] * phd, deven[0] * thd + deven[1] * phd


def linkage_transform(delta1: float, delta2: float, geom: WristGeometry) -> HomogeneousTransform:
    """Four-joint chain of one supporting linkage.

    Each factor ``T_axis(angle, x, y, z)`` translates by ``(x, y, z)`` and
    then rotates about ``axis``; the chain is
    ``T_y(d1; 0,r,0) T_x(d2+d0; 0,0,l1) T_x(d2-d0; 0,0,l2) T_y(d1; 0,r,l1)``.
    """
    r, l1, l2 = geom.plate_radius, geom.short_link, geom.long_link
    d0 = geom.fold_angle
    T = (
        _trans(0.0, r, 0.0) @ _rot_y(delta1)
        @ _trans(0.0, 0.0, l1) @ _rot_x(delta2 + d0)
        @ _trans(0.0, 0.0, l2) @ _rot_x(delta2 - d0)
        @ _trans(0.0, r, l1) @ _rot_y(delta1)
    )
    return HomogeneousTransform(T)


def length_jacobian(pose: WristPose, geom: WristGeometry) -> np.ndarray:
    """3x2 matrix of ``dL_i/d(theta, phi)`` in m/rad."""
    return _length_jacobian(pose.theta, pose.phi, geom.plate_radius)


def _length_jacobian(theta, phi, r):
    s2, c2 = math.sin(0.5 * theta), math.cos(0.5 * theta)
    J = np.empty((3, 2))
    for i, off in enumerate(TCA_OFFSETS):
        J[i, 0] = -r * math.sin(phi + off) * c2
        J[i, 1] = -2.0 * r * math.cos(phi + off) * s2
    return J


def tilt_vector(theta, phi):
    """Top-view coordinates ``(theta cos phi, theta sin phi)``."""
    return theta * np.cos(phi), theta * np.sin(phi)


def pose_from_tilt(x: float, y: float) -> WristPose:
    theta = math.hypot(x, y)
    if theta == 0.0:
        return WristPose(0.0, 0.0)
    return WristPose(theta, math.atan2(y, x))
