"""Simulation and control of a TCA-driven two-degree-of-freedom parallel wrist."""

from .errors import (
    ConfigError,
    DivergenceError,
    DomainError,
    DynamicsSingularityError,
    GeometryInfeasibleError,
    InconsistentLengthsError,
    InfeasibleLengthsError,
    InvalidInputError,
    ModelAssemblyError,
    SchemaError,
    WristError,
)
from .kinematics import (
    TABLE_I_GEOMETRY,
    WristGeometry,
    WristPose,
    forward_kinematics,
    inverse_kinematics,
)
from .tca import TABLE_I_TCA, TcaParams
from .dynamics import TABLE_I_BODY, BodyParams, WristModel, WristState, simulate, state_derivative
from . import kernel

__version__ = "0.1.0"

__all__ = [
    "WristError", "InvalidInputError", "DomainError", "GeometryInfeasibleError", "InconsistentLengthsError",
    "InfeasibleLengthsError", "ModelAssemblyError", "DynamicsSingularityError", "DivergenceError",
    "ConfigError", "SchemaError",
    "TABLE_I_GEOMETRY", "WristGeometry", "WristPose", "forward_kinematics", "inverse_kinematics",
    "TABLE_I_TCA", "TcaParams",
    "TABLE_I_BODY", "BodyParams", "WristModel", "WristState", "simulate", "state_derivative",
    "kernel",
]
