"""Thermo-electromechanical model of a single twisted-and-coiled actuator.

Temperature follows a first-order heat balance driven by Joule power,

    C_th dT/dt = P - lambda (T - T_amb),

and the tensile force is a spring-damper plus a thermal term,

    F = k (L - L0) + b dL/dt + c (T - T_amb).

Positive force is tension pulling the end plate toward the base along the
actuator line. All quantities are SI with temperatures in degrees Celsius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import DomainError, InvalidInputError

__all__ = [
    "TcaParams",
    "TcaThermalState",
    "TABLE_I_TCA",
    "thermal_rate",
    "thermal_step",
    "steady_state_temp",
    "analytic_temperature",
    "tca_force",
]


def _finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise InvalidInputError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class TcaParams:
    """Constants of one actuator.

    ``conductivity`` must be strictly positive, otherwise the heat balance
    has no steady state.
    """

    spring_k: float  # N/m
    damping_b: float  # N*s/m
    thermal_c: float  # N/degC
    resistance: float  # ohm
    thermal_mass: float  # W*s/degC
    conductivity: float  # W/degC
    ambient: float  # degC
    rest_length: float  # m

    def __post_init__(self):
        _finite(
            "TcaParams",
            self.spring_k,
            self.damping_b,
            self.thermal_c,
            self.resistance,
            self.thermal_mass,
            self.conductivity,
            self.ambient,
            self.rest_length,
        )
        positive = {
            "spring_k": self.spring_k,
            "damping_b": self.damping_b,
            "thermal_c": self.thermal_c,
            "resistance": self.resistance,
            "thermal_mass": self.thermal_mass,
            "conductivity": self.conductivity,
            "rest_length": self.rest_length,
        }
        for name, value in positive.items():
            if value <= 0.0:
                raise InvalidInputError(f"TcaParams.{name} must be > 0, got {value}")

    @property
    def time_constant(self) -> float:
        """Thermal time constant C_th / lambda in seconds."""
        return self.thermal_mass / self.conductivity

    def in_parallel(self, count: int) -> "TcaParams":
        """Equivalent actuator for ``count`` identical fibres side by side.

        Stiffness, damping and thermal force add; electrical resistance
        divides. Thermal mass and conductivity stay per-fibre because the
        input power is specified per fibre.
        """
        if count < 1:
            raise InvalidInputError(f"parallel count must be >= 1, got {count}")
        return replace(
            self,
            spring_k=self.spring_k * count,
            damping_b=self.damping_b * count,
            thermal_c=self.thermal_c * count,
            resistance=self.resistance / count,
        )


# Prototype values, converted to SI (c = 23.09 mN/degC, L0 = 100 mm).
TABLE_I_TCA = TcaParams(
    spring_k=238.0,
    damping_b=0.61,
    thermal_c=23.09e-3,
    resistance=20.0,
    thermal_mass=0.8236,
    conductivity=0.0235,
    ambient=25.0,
    rest_length=0.100,
)


@dataclass(frozen=True)
class TcaThermalState:
    temperature: float  # degC

    def __post_init__(self):
        _finite("temperature", self.temperature)


def _check_power(power):
    _finite("power", power)
    if power < 0.0:
        raise DomainError(f"electrical power cannot be negative, got {power}")


def thermal_rate(temperature: float, power: float, params: TcaParams) -> float:
    """dT/dt in degC/s."""
    return (power - params.conductivity * (temperature - params.ambient)) / params.thermal_mass


def thermal_step(state: TcaThermalState, power: float, dt: float, params: TcaParams) -> TcaThermalState:
    """Advance the actuator temperature by one RK4 step of length ``dt``."""
    _check_power(power)
    _finite("dt", dt)
    if dt <= 0.0:
        raise InvalidInputError(f"dt must be > 0, got {dt}")
    T = state.temperature
    k1 = thermal_rate(T, power, params)
    k2 = thermal_rate(T + 0.5 * dt * k1, power, params)
    k3 = thermal_rate(T + 0.5 * dt * k2, power, params)
    k4 = thermal_rate(T + dt * k3, power, params)
    return TcaThermalState(T + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def steady_state_temp(power: float, params: TcaParams) -> float:
    _check_power(power)
    return params.ambient + power / params.conductivity


def analytic_temperature(t: float, power: float, params: TcaParams, initial: float | None = None) -> float:
    """Closed-form temperature under constant power (reference solution)."""
    T0 = params.ambient if initial is None else initial
    T_inf = steady_state_temp(power, params)
    return T_inf + (T0 - T_inf) * math.exp(-t / params.time_constant)


def tca_force(length: float, length_rate: float, temperature: float, params: TcaParams) -> float:
    """Signed tensile force in newtons (positive = tension)."""
    _finite("tca_force input", length, length_rate, temperature)
    if length <= 0.0:
        raise InvalidInputError(f"actuator length must be > 0, got {length}")
    return (
        params.spring_k * (length - params.rest_length)
        + params.damping_b * length_rate
        + params.thermal_c * (temperature - params.ambient)
    )
