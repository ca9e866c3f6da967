"""Experiment configuration files.

Configs are INI files with sections ``[geometry]``, ``[body]``,
``[tca.1]`` .. ``[tca.3]``, ``[controller]``, ``[trajectory]``, ``[sim]`` and
``[output]``. Dimensional values carry a unit suffix (``50 mm``, ``70 g``,
``23.09 mN/C``) and are converted to SI on load; vectors are
space-separated numbers followed by one unit. Missing sections and keys
fall back to the prototype values. See ``configs/`` for complete examples.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..control.nmpc import MpcConfig
from ..control.pid import PidGains
from ..control.reference import KINDS, ReferenceParams
from ..dynamics import TABLE_I_BODY, BodyParams, WristModel
from ..errors import ConfigError, WristError
from ..kinematics import TABLE_I_GEOMETRY, WristGeometry, WristPose
from ..tca import TABLE_I_TCA, TcaParams

__all__ = [
    "UNITS",
    "parse_quantity",
    "ControllerConfig",
    "TrajectoryConfig",
    "SimConfig",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "build_model",
]

# unit -> (dimension, factor to SI)
UNITS = {
    "m": ("length", 1.0), "cm": ("length", 1e-2), "mm": ("length", 1e-3),
    "kg": ("mass", 1.0), "g": ("mass", 1e-3),
    "s": ("time", 1.0), "ms": ("time", 1e-3), "min": ("time", 60.0),
    "Hz": ("frequency", 1.0), "mHz": ("frequency", 1e-3),
    "rad": ("angle", 1.0), "deg": ("angle", math.pi / 180.0),
    "W": ("power", 1.0), "mW": ("power", 1e-3),
    "C": ("temperature", 1.0), "degC": ("temperature", 1.0),
    "ohm": ("resistance", 1.0),
    "N/m": ("stiffness", 1.0), "N/mm": ("stiffness", 1e3),
    "N*s/m": ("damping", 1.0), "N.s/m": ("damping", 1.0),
    "N/C": ("thermal_force", 1.0), "mN/C": ("thermal_force", 1e-3),
    "Ws/C": ("thermal_mass", 1.0), "J/C": ("thermal_mass", 1.0),
    "W/C": ("conductivity", 1.0), "mW/C": ("conductivity", 1e-3),
    "kg*m^2": ("inertia", 1.0), "kg*mm^2": ("inertia", 1e-6), "g*mm^2": ("inertia", 1e-9),
    "m/s^2": ("acceleration", 1.0),
    "N*m*s/rad": ("rot_damping", 1.0),
}

_SECTIONS = ("geometry", "body", "tca.1", "tca.2", "tca.3", "controller", "trajectory", "sim", "output")


class _Reader:
    """Typed access to a parsed file with line-aware error messages."""

    def __init__(self, text: str, source: str):
        self.text = text
        self.source = source
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc
        for sec in self.cp.sections():
            if sec not in _SECTIONS:
                raise ConfigError(f"{self._where(sec)}: unknown section [{sec}]; expected one of {', '.join(_SECTIONS)}")
        self.used: set[tuple[str, str]] = set()

    def _line_of(self, section, key=None):
        cur = None
        for n, line in enumerate(self.text.splitlines(), 1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                cur = s[1:-1].strip()
                if key is None and cur == section:
                    return n
            elif cur == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
                return n
        return None

    def _where(self, section, key=None):
        n = self._line_of(section, key)
        loc = f"{self.source}:{n}" if n else self.source
        return f"{loc} [{section}]" + (f" {key}" if key else "")

    def fail(self, section, key, msg):
        raise ConfigError(f"{self._where(section, key)}: {msg}")

    def has(self, section, key):
        return self.cp.has_option(section, key)

    def raw(self, section, key, default=None):
        if not self.has(section, key):
            return default
        self.used.add((section, key))
        return self.cp.get(section, key).strip()

    def numbers(self, section, key, dimension, default, count=None):
        """Quantity (or vector of quantities) converted to SI."""
        s = self.raw(section, key)
        if s is None:
            return default
        try:
            vals = parse_quantity(s, dimension)
        except ConfigError as exc:
            self.fail(section, key, str(exc))
        if count is not None and len(vals) not in (1, count):
            self.fail(section, key, f"expected {count} values, got {len(vals)}")
        if count is None:
            if len(vals) != 1:
                self.fail(section, key, f"expected one value, got {len(vals)}")
            return vals[0]
        return tuple(vals * count if len(vals) == 1 else vals)

    def plain(self, section, key, default, kind=float, count=None):
        s = self.raw(section, key)
        if s is None:
            return default
        try:
            vals = [kind(_number(tok)) if kind is float else kind(tok) for tok in s.split()]
        except (ValueError, ConfigError):
            self.fail(section, key, f"cannot parse {s!r} as {kind.__name__}")
        if count is None:
            if len(vals) != 1:
                self.fail(section, key, f"expected one value, got {len(vals)}")
            return vals[0]
        if len(vals) not in (1, count):
            self.fail(section, key, f"expected {count} values, got {len(vals)}")
        return tuple(vals * count if len(vals) == 1 else vals)

    def boolean(self, section, key, default):
        if not self.has(section, key):
            return default
        self.used.add((section, key))
        try:
            return self.cp.getboolean(section, key)
        except ValueError:
            self.fail(section, key, "expected true/false")

    def check_unused(self):
        for sec in self.cp.sections():
            for key in self.cp.options(sec):
                if (sec, key) not in self.used:
                    self.fail(sec, key, "unknown key")


def _number(tok: str) -> float:
    try:
        return float(tok)
    except ValueError:
        pass
    try:
        return float(Fraction(tok))  # allows "1/60"
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {tok!r}") from exc


def parse_quantity(text: str, dimension: str) -> list[float]:
    """Parse ``"<v1> [v2 ...] <unit>"`` into SI values of ``dimension``."""
    toks = text.split()
    if len(toks) < 2:
        raise ConfigError(f"{text!r} needs a value and a unit suffix")
    unit = toks[-1]
    if unit not in UNITS:
        raise ConfigError(f"unknown unit {unit!r} in {text!r}")
    dim, factor = UNITS[unit]
    if dim != dimension:
        raise ConfigError(f"unit {unit!r} is a {dim}, expected a {dimension}")
    vals = [_number(t) * factor for t in toks[:-1]]
    if not all(math.isfinite(v) for v in vals):
        raise ConfigError(f"non-finite value in {text!r}")
    return vals


@dataclass(frozen=True)
class ControllerConfig:
    kind: str = "nmpc"  # nmpc | pid | open_loop
    mpc: MpcConfig = field(default_factory=MpcConfig)
    pid: PidGains = field(default_factory=PidGains)
    baseline: float = 0.0  # W, PID output at zero error
    rate_cutoff: float = 1.0  # Hz
    model_knows_load: bool = False


@dataclass(frozen=True)
class TrajectoryConfig:
    kind: str = "circle"
    params: ReferenceParams = field(default_factory=ReferenceParams)
    # open-loop sinusoidal drive, per actuator
    power_offset: tuple = (0.0, 0.0, 0.0)  # W
    power_amplitude: tuple = (0.0, 0.0, 0.0)  # W
    frequency: float = 1.0 / 60.0  # Hz
    phase: tuple = (0.0, 0.0, 0.0)  # rad

    def power(self, t: float) -> np.ndarray:
        w = 2.0 * math.pi * self.frequency * t
        return np.maximum(
            0.0,
            np.asarray(self.power_offset) + np.asarray(self.power_amplitude) * np.sin(w + np.asarray(self.phase)),
        )


@dataclass(frozen=True)
class SimConfig:
    duration: float = 180.0  # s
    plant_dt: float = 1e-3
    control_dt: float = 0.1
    noise: float = 0.0  # rad, pose measurement std dev
    seed: int = 0
    perfect_start: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    geometry: WristGeometry = TABLE_I_GEOMETRY
    body: BodyParams = TABLE_I_BODY
    tcas: tuple = (TABLE_I_TCA, TABLE_I_TCA, TABLE_I_TCA)
    parallel: tuple = (1, 1, 1)
    load_mass: float = 0.0  # kg
    conductivity_override: float | None = None  # W/C
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    trajectory: TrajectoryConfig = field(default_factory=TrajectoryConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    output_dir: str = "runs/run"
    plots: bool = True
    source_text: str = ""
    name: str = "run"


def _wrap(section, key, fn, rd: _Reader):
    try:
        return fn()
    except ConfigError:
        raise
    except WristError as exc:
        rd.fail(section, key, str(exc))


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    rd = _Reader(text, source)
    G = TABLE_I_GEOMETRY
    geometry = _wrap("geometry", None, lambda: WristGeometry(
        plate_radius=rd.numbers("geometry", "plate_radius", "length", G.plate_radius),
        plate_separation=rd.numbers("geometry", "plate_separation", "length", G.plate_separation),
        short_link=rd.numbers("geometry", "short_link", "length", G.short_link),
        long_link=rd.numbers("geometry", "long_link", "length", G.long_link),
        theta_max=rd.numbers("geometry", "theta_max", "angle", G.theta_max),
    ), rd)
    B = TABLE_I_BODY
    body = _wrap("body", None, lambda: BodyParams(
        plate_mass=rd.numbers("body", "plate_mass", "mass", B.plate_mass),
        link_mass=rd.numbers("body", "link_mass", "mass", B.link_mass),
        link_inertia=rd.numbers("body", "link_inertia", "inertia", B.link_inertia, 3),
        gravity=rd.numbers("body", "gravity", "acceleration", B.gravity),
        damping=rd.numbers("body", "damping", "rot_damping", B.damping, 2),
    ), rd)
    load = rd.numbers("body", "load_mass", "mass", 0.0)
    if load < 0:
        rd.fail("body", "load_mass", "must be >= 0")

    tcas, parallel = [], []
    T = TABLE_I_TCA
    for i in (1, 2, 3):
        s = f"tca.{i}"
        tcas.append(_wrap(s, None, lambda: TcaParams(
            spring_k=rd.numbers(s, "spring_k", "stiffness", T.spring_k),
            damping_b=rd.numbers(s, "damping_b", "damping", T.damping_b),
            thermal_c=rd.numbers(s, "thermal_c", "thermal_force", T.thermal_c),
            resistance=rd.numbers(s, "resistance", "resistance", T.resistance),
            thermal_mass=rd.numbers(s, "thermal_mass", "thermal_mass", T.thermal_mass),
            conductivity=rd.numbers(s, "conductivity", "conductivity", T.conductivity),
            ambient=rd.numbers(s, "ambient", "temperature", T.ambient),
            rest_length=rd.numbers(s, "rest_length", "length", T.rest_length),
        ), rd))
        n = rd.plain(s, "parallel", 1, int)
        if n < 1:
            rd.fail(s, "parallel", "must be >= 1")
        parallel.append(n)

    c = "controller"
    kind = rd.raw(c, "type", "nmpc")
    if kind not in ("nmpc", "pid", "open_loop"):
        rd.fail(c, "type", f"expected nmpc, pid or open_loop, got {kind!r}")
    M = MpcConfig()
    u_min = rd.numbers(c, "u_min", "power", tuple(M.u_min), 3)
    u_max = rd.numbers(c, "u_max", "power", tuple(M.u_max), 3)
    mpc = _wrap(c, None, lambda: MpcConfig(
        control_horizon=rd.plain(c, "control_horizon", M.control_horizon, int),
        prediction_horizon=rd.plain(c, "prediction_horizon", M.prediction_horizon, int),
        step_dt=rd.numbers(c, "step_dt", "time", M.step_dt),
        weight_Q=np.diag(rd.plain(c, "weight_Q", tuple(np.diag(M.weight_Q)), float, 2)),
        weight_R=np.diag(rd.plain(c, "weight_R", tuple(np.diag(M.weight_R)), float, 3)),
        weight_S=np.diag(rd.plain(c, "weight_S", tuple(np.diag(M.weight_S)), float, 3)),
        u_min=np.array(u_min),
        u_max=np.array(u_max),
        max_sqp_iters=rd.plain(c, "max_sqp_iters", M.max_sqp_iters, int),
        kkt_tolerance=rd.plain(c, "kkt_tolerance", M.kkt_tolerance),
        predictor=rd.raw(c, "predictor", M.predictor),
    ), rd)
    P = PidGains()
    pid = _wrap(c, None, lambda: PidGains(
        kp=rd.plain(c, "kp", P.kp),
        ki=rd.plain(c, "ki", P.ki),
        kd=rd.plain(c, "kd", P.kd),
        integral_clamp=rd.numbers(c, "integral_clamp", "power", P.integral_clamp),
    ), rd)
    controller = ControllerConfig(
        kind=kind,
        mpc=mpc,
        pid=pid,
        baseline=rd.numbers(c, "baseline", "power", 0.0),
        rate_cutoff=rd.numbers(c, "rate_cutoff", "frequency", 1.0),
        model_knows_load=rd.boolean(c, "model_knows_load", False),
    )
    lam = rd.numbers(c, "conductivity_override", "conductivity", None)
    if lam is not None and not lam > 0:
        rd.fail(c, "conductivity_override", "must be > 0")

    t = "trajectory"
    tkind = rd.raw(t, "kind", "circle")
    if tkind not in KINDS + ("sinusoid",):
        rd.fail(t, "kind", f"unknown trajectory kind {tkind!r}")
    hold = WristPose.from_any(
        rd.numbers(t, "hold_theta", "angle", 0.0), rd.numbers(t, "hold_phi", "angle", 0.0)
    )
    steps_raw = rd.raw(t, "steps", "")
    steps = []
    for chunk in filter(None, (s.strip() for s in steps_raw.split(";"))):
        try:
            th, ph = parse_quantity(chunk, "angle")
        except (ConfigError, ValueError):
            rd.fail(t, "steps", f"each step is '<theta> <phi> <unit>', got {chunk!r}")
        steps.append(WristPose.from_any(th, ph))
    period = rd.numbers(t, "period", "time", 60.0)
    if not period > 0:
        rd.fail(t, "period", "must be > 0")
    freq = rd.numbers(t, "frequency", "frequency", None)
    params = ReferenceParams(
        amplitude=rd.numbers(t, "amplitude", "angle", math.radians(15.0)),
        period=(1.0 / freq) if (freq and tkind != "sinusoid") else period,
        hold_pose=hold,
        steps=tuple(steps),
    )
    traj = TrajectoryConfig(
        kind=tkind,
        params=params,
        power_offset=rd.numbers(t, "power_offset", "power", (0.0,) * 3, 3),
        power_amplitude=rd.numbers(t, "power_amplitude", "power", (0.0,) * 3, 3),
        frequency=freq if freq is not None else 1.0 / period,
        phase=rd.numbers(t, "phase", "angle", (0.0,) * 3, 3),
    )
    if kind == "open_loop" and tkind != "sinusoid":
        rd.fail(t, "kind", "open-loop runs need kind = sinusoid")
    if kind != "open_loop" and tkind == "sinusoid":
        rd.fail(t, "kind", "sinusoid is an open-loop power drive; use controller type = open_loop")
    if tkind == "stepwise" and not steps:
        rd.fail(t, "steps", "stepwise trajectory needs at least one pose")

    s = "sim"
    sim = SimConfig(
        duration=rd.numbers(s, "duration", "time", 180.0),
        plant_dt=rd.numbers(s, "plant_dt", "time", 1e-3),
        control_dt=rd.numbers(s, "control_dt", "time", 0.1),
        noise=rd.numbers(s, "noise", "angle", 0.0),
        seed=rd.plain(s, "seed", 0, int),
        perfect_start=rd.boolean(s, "perfect_start", False),
    )
    if sim.duration < 0:
        rd.fail(s, "duration", "must be >= 0")
    if not (0 < sim.plant_dt <= 1e-3 + 1e-15):
        rd.fail(s, "plant_dt", "must be in (0, 1 ms]")
    if not sim.control_dt >= sim.plant_dt:
        rd.fail(s, "control_dt", "must be >= plant_dt")
    if sim.noise < 0 or not 0 <= sim.seed < 2**64:
        rd.fail(s, "noise" if sim.noise < 0 else "seed", "out of range")

    out_dir = rd.raw("output", "dir", "runs/" + Path(source).stem)
    plots = rd.boolean("output", "plots", True)
    rd.check_unused()
    return ExperimentConfig(
        geometry=geometry,
        body=body,
        tcas=tuple(tcas),
        parallel=tuple(parallel),
        load_mass=load,
        conductivity_override=lam,
        controller=controller,
        trajectory=traj,
        sim=sim,
        output_dir=out_dir,
        plots=plots,
        source_text=text,
        name=Path(source).stem,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    return parse_config(text, str(path))


def build_model(cfg: ExperimentConfig, *, with_load: bool = True) -> WristModel:
    """Plant model for a config; ``with_load=False`` gives the controller's nominal model."""
    tcas = tuple(t.in_parallel(n) for t, n in zip(cfg.tcas, cfg.parallel))
    if cfg.conductivity_override is not None:
        tcas = tuple(replace(t, conductivity=cfg.conductivity_override) for t in tcas)
    model = WristModel(cfg.geometry, cfg.body, tcas)
    if with_load and cfg.load_mass > 0:
        model = model.with_load(cfg.load_mass)
    return model
