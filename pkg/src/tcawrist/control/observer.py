"""Open-loop thermal observer: the controller's own copy of the heat balance."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from ..tca import TABLE_I_TCA, TcaParams, TcaThermalState, thermal_step

__all__ = ["ObserverState", "observer_step"]


@dataclass(frozen=True)
class ObserverState:
    estimated_temperatures: tuple[float, float, float] = (25.0, 25.0, 25.0)

    def __post_init__(self):
        if len(self.estimated_temperatures) != 3 or not all(math.isfinite(v) for v in self.estimated_temperatures):
            raise InvalidInputError("observer needs three finite temperatures")

    def as_array(self) -> np.ndarray:
        return np.array(self.estimated_temperatures, dtype=float)


def observer_step(
    obs: ObserverState,
    applied_power,
    dt: float,
    tcas: tuple[TcaParams, TcaParams, TcaParams] = (TABLE_I_TCA,) * 3,
) -> ObserverState:
    """Advance each channel by one thermal step; no measurement correction."""
    u = [float(v) for v in applied_power]
    return ObserverState(
        tuple(
            thermal_step(TcaThermalState(T), p, dt, prm).temperature
            for T, p, prm in zip(obs.estimated_temperatures, u, tcas)
        )
    )
