"""Virtual wire testing machine.

Three rigs share one winding module (a tension servo acting on the reflected
spool inertia) and a chain of passive pulleys:

* the efficiency rig pulls through two pulleys and reads both tensions,
* the linear loading rig drives an 8.1 kg mass on a guide, or a pinned end,
* the force-control experiment commands a wire-driven arm.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .dynamics import MAX_DT, WireModelKind, WireState, step_internal, tension
from .errors import ContractError, NumericalInstabilityError
from .pulley import (
    EfficiencyTable,
    EtaMatrix,
    PulleySpec,
    WireSpec,
    default_efficiency_table,
    get_wire,
    lookup_efficiency,
)
from .qp import solve_tension, solve_tension_compensated
from .routing import (
    RobotModel,
    end_effector,
    force_from_torque,
    joint_jacobian,
    joint_torque_from_force,
    muscle_jacobian,
    torque_from_tension,
)

GRAVITY = 9.80665
FIXED_PRETENSION = 100.0  # N
TRACE_HEADER = ("t", "cmd_n", "tin_n", "tout_n", "x_m", "v_mps", "l_m")


class RigMode(enum.Enum):
    EFFICIENCY = "efficiency"
    LINEAR_LOAD_FREE = "linear-load-free"
    LINEAR_LOAD_FIXED = "linear-load-fixed"
    FORCE_CONTROL = "force-control"
    PRE_STRETCH = "pre-stretch"


@dataclass(frozen=True)
class RigConfig:
    mode: RigMode
    wire: WireSpec = field(default_factory=lambda: get_wire("VB-175"))
    model_kind: WireModelKind = WireModelKind.KELVIN_VOIGT
    pulley_chain: tuple[PulleySpec, ...] = (PulleySpec(40.0), PulleySpec(40.0))
    load_mass: float = 8.1  # kg
    stroke_limit: float = 0.35  # m, symmetric about the start position
    motor_max_tension: float = 400.0  # N
    gravity: float = GRAVITY
    dt: float = 5e-4  # s
    duration: float = 120.0  # s
    seed: int = 0
    # calibration, not measurement: reflected spool inertia and free wire span
    actuator_mass: float = 8.1  # kg
    wire_length: float = 2.0  # m
    servo_bandwidth_hz: float | None = 50.0  # None for an ideal servo
    # constant tension added to the command, e.g. to carry the load's weight
    tension_bias: float = 0.0  # N
    # weak stroke-centering loop of the winding controller (N/m, N*s/m)
    centering_kp: float = 0.0
    centering_kd: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.dt <= MAX_DT:
            raise ContractError(f"dt must lie in (0, {MAX_DT}] s")
        if self.duration <= 0 or self.load_mass <= 0 or self.stroke_limit <= 0:
            raise ContractError("duration, load_mass and stroke_limit must be positive")
        if self.actuator_mass <= 0 or self.wire_length <= 0:
            raise ContractError("actuator_mass and wire_length must be positive")
        if not 0 < self.motor_max_tension:
            raise ContractError("motor_max_tension must be positive")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = self.mode.value
        d["model_kind"] = self.model_kind.value
        return d


@dataclass(frozen=True)
class ChirpSpec:
    """Constant-amplitude tension sweep with linearly rising frequency."""

    t_min_tension: float = 0.0
    t_max_tension: float = 150.0
    f_low: float = 2.0
    f_high: float = 20.0
    duration: float = 120.0

    def __post_init__(self):
        if not 0 <= self.t_min_tension < self.t_max_tension:
            raise ContractError("need 0 <= t_min_tension < t_max_tension")
        if not 0 < self.f_low < self.f_high:
            raise ContractError("need 0 < f_low < f_high")
        if self.duration <= 0:
            raise ContractError("duration must be positive")

    @property
    def offset(self) -> float:
        return 0.5 * (self.t_max_tension + self.t_min_tension)

    @property
    def amplitude(self) -> float:
        return 0.5 * (self.t_max_tension - self.t_min_tension)

    def phase(self, t):
        return 2 * np.pi * (self.f_low * t + (self.f_high - self.f_low) * t * t / (2 * self.duration))

    def frequency(self, t):
        return self.f_low + (self.f_high - self.f_low) * t / self.duration

    def time_at(self, f):
        return (f - self.f_low) * self.duration / (self.f_high - self.f_low)


def chirp(spec: ChirpSpec, t):
    """Commanded tension; starts at ``t_min_tension`` and sweeps f_low -> f_high."""
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0) or np.any(arr > spec.duration * (1 + 1e-12)):
        raise ContractError(f"t must lie in [0, {spec.duration}] s")
    value = spec.offset - spec.amplitude * np.cos(spec.phase(arr))
    return float(value) if arr.ndim == 0 else value


def chain_efficiency(config: RigConfig, table: EfficiencyTable | None, tension_n: float) -> float:
    """Product of per-pulley efficiencies along ``config.pulley_chain``."""
    if not config.pulley_chain:
        return 1.0
    table = table or default_efficiency_table()
    e = 1.0
    for pulley in config.pulley_chain:
        e *= lookup_efficiency(table, config.wire.name, pulley.diameter, tension_n).value
    return e


def run_efficiency_rig(config: RigConfig, tension_setpoints: Sequence[float], trials: int = 20,
                       rng_noise: float = 0.0, table: EfficiencyTable | None = None) -> list[tuple[float, float]]:
    """Steady-state pulls through the pulley chain.

    Returns ``(t_in, t_out)`` per trial, setpoint-major. The output reading
    carries multiplicative Gaussian noise and never exceeds the input.
    """
    if trials < 1:
        raise ContractError("trials must be >= 1")
    if rng_noise < 0:
        raise ContractError("noise must be non-negative")
    rng = np.random.default_rng(config.seed)
    out = []
    for t_in in tension_setpoints:
        if not 0 < t_in <= config.motor_max_tension:
            raise ContractError(f"setpoint {t_in} N outside (0, {config.motor_max_tension}] N")
        ideal = t_in * chain_efficiency(config, table, t_in)
        for _ in range(trials):
            noisy = ideal * (1.0 + rng_noise * rng.standard_normal()) if rng_noise else ideal
            out.append((float(t_in), float(min(noisy, t_in))))
    return out


@dataclass
class SimTrace:
    time: np.ndarray
    commanded_tension: np.ndarray
    actual_tension_in: np.ndarray
    actual_tension_out: np.ndarray
    load_position: np.ndarray
    load_velocity: np.ndarray
    wire_total_length: np.ndarray
    events: list[tuple[float, str]] = field(default_factory=list)

    def rows(self):
        return zip(self.time, self.commanded_tension, self.actual_tension_in, self.actual_tension_out,
                   self.load_position, self.load_velocity, self.wire_total_length)


def calibrated_linear_load_config(mode: RigMode, chirp_spec: ChirpSpec | None = None,
                             table: EfficiencyTable | None = None, **overrides) -> RigConfig:
    """Calibrated linear loading rig (1 mm Vectran over two 40 mm pulleys).

    In free mode the winding controller adds the tension that holds the load
    against gravity on average, plus a 0.1 Hz stroke-centering loop, so the
    mass stays inside its +-0.35 m stroke during a long sweep. In fixed mode a
    100 N pretension keeps the wire taut through the resonance.
    """
    base = replace(RigConfig(mode=mode), **overrides)
    if mode is RigMode.LINEAR_LOAD_FIXED:
        tuned = {"tension_bias": FIXED_PRETENSION}
    elif mode is RigMode.LINEAR_LOAD_FREE:
        chirp_spec = chirp_spec or ChirpSpec()
        e = chain_efficiency(base, table, 0.5 * base.motor_max_tension)
        total = base.load_mass / e + base.actuator_mass
        wn = 2 * math.pi * 0.1
        tuned = {
            "tension_bias": base.load_mass * base.gravity / e - chirp_spec.offset,
            "centering_kp": total * wn * wn,
            "centering_kd": 2 * 0.7 * total * wn,
        }
    else:
        raise ContractError(f"{mode} is not a linear-load mode")
    tuned = {k: v for k, v in tuned.items() if k not in overrides}
    return replace(base, **tuned)


def run_linear_load(config: RigConfig, command: ChirpSpec | Callable[[float], float] | float,
                    table: EfficiencyTable | None = None) -> SimTrace:
    """Semi-implicit Euler simulation of the linear loading rig.

    Positions: ``s`` is wire reeled onto the spool, ``x`` the load height
    (up positive). The free span has natural length ``L0 - s`` and path length
    ``L0 - x`` so reeling in stiffens the wire.
    """
    if config.mode not in (RigMode.LINEAR_LOAD_FREE, RigMode.LINEAR_LOAD_FIXED):
        raise ContractError(f"run_linear_load needs a linear-load mode, got {config.mode}")
    if isinstance(command, ChirpSpec):
        if config.duration > command.duration * (1 + 1e-12):
            raise ContractError("simulation duration exceeds the chirp duration")
        spec = command
        cmd_fn = lambda t: chirp(spec, min(t, spec.duration))  # noqa: E731
    elif callable(command):
        cmd_fn = command
    else:
        const = float(command)
        cmd_fn = lambda t: const  # noqa: E731

    free = config.mode is RigMode.LINEAR_LOAD_FREE
    dt = config.dt
    n = int(round(config.duration / dt)) + 1
    wire = config.wire
    kind = config.model_kind
    e_chain = chain_efficiency(config, table, 0.5 * config.motor_max_tension)
    limit_t = 10.0 * config.motor_max_tension
    servo_a = 1.0 if config.servo_bandwidth_hz is None else 1.0 - math.exp(-2 * math.pi * config.servo_bandwidth_hz * dt)
    M, Ma, g = config.load_mass, config.actuator_mass, config.gravity

    t_arr = np.arange(n) * dt
    cmd = np.empty(n)
    tin = np.empty(n)
    tout = np.empty(n)
    xs = np.empty(n)
    vs = np.empty(n)
    ls = np.empty(n)
    events: list[tuple[float, str]] = []

    def target(t, x, v):
        c = cmd_fn(t)
        u = c + config.tension_bias
        if free:
            u += -config.centering_kp * x - config.centering_kd * v
        return c, min(max(u, 0.0), config.motor_max_tension)

    c0, u0 = target(0.0, 0.0, 0.0)
    L0 = config.wire_length
    # start at rest with the wire stretched to the initial servo tension
    eps0 = u0 / wire.axial_stiffness if kind is WireModelKind.KELVIN_VOIGT else \
        u0 * (wire.axial_stiffness + wire.secondary_stiffness) / (wire.axial_stiffness * wire.secondary_stiffness)
    nat0 = L0 / (1.0 + eps0)
    internal = eps0 * wire.secondary_stiffness / (wire.axial_stiffness + wire.secondary_stiffness)
    s = sd = x = v = 0.0
    t_m = u0
    was_slack = eps0 <= 0.0

    for k in range(n):
        t = t_arr[k]
        c, u = target(t, x, v)
        t_m += servo_a * (u - t_m)
        nat = nat0 - s
        path = L0 - x
        if nat <= 0:
            raise NumericalInstabilityError("wire fully reeled in", t)
        eps = (path - nat) / nat
        eps_rate = (sd * (1.0 + eps) - v) / nat
        state = WireState(nat, path, eps_rate, internal)
        t_in = tension(kind, wire, state)
        if not math.isfinite(t_in) or abs(t_in) > limit_t:
            raise NumericalInstabilityError(f"tension {t_in} exceeds {limit_t} N", t)
        slack = eps <= 0.0
        if slack and not was_slack:
            events.append((float(t), "slack"))
        was_slack = slack
        t_out = e_chain * t_in
        cmd[k], tin[k], tout[k], xs[k], vs[k], ls[k] = c, t_in, t_out, x, v, path
        if k == n - 1:
            break
        internal = step_internal(kind, wire, state, dt).internal_strain
        sd += dt * (t_m - t_in) / Ma
        s += dt * sd
        if free:
            v += dt * (t_out / M - g)
            x += dt * v
            if x > config.stroke_limit:
                x, v = config.stroke_limit, 0.0
                events.append((float(t + dt), "stroke_limit_upper"))
            elif x < -config.stroke_limit:
                x, v = -config.stroke_limit, 0.0
                events.append((float(t + dt), "stroke_limit_lower"))

    return SimTrace(t_arr, cmd, tin, tout, xs, vs, ls, events)


# --- force control ---------------------------------------------------------

@dataclass(frozen=True)
class ForceRamp:
    start: float = 0.0  # N
    stop: float = 40.0  # N
    duration: float = 4.0  # s
    dt: float = 0.01  # s

    def times(self) -> np.ndarray:
        return np.arange(int(round(self.duration / self.dt)) + 1) * self.dt

    def values(self) -> np.ndarray:
        t = self.times()
        return self.start + (self.stop - self.start) * t / self.duration


@dataclass
class ForceControlTrace:
    time: np.ndarray
    commanded_force: np.ndarray  # vertical component, N
    realized_force: np.ndarray  # vertical component, N
    tensions: np.ndarray  # (steps, m)
    compensate: bool
    rmse: float

    def rows(self):
        for k in range(self.time.size):
            yield (self.time[k], self.commanded_force[k], self.realized_force[k], *self.tensions[k])


def run_force_control(robot: RobotModel, eta: EtaMatrix, plant_eta: EtaMatrix, ramp: ForceRamp = ForceRamp(),
                      compensate: bool = True, q=None, tension_noise: float = 0.0,
                      seed: int = 0) -> ForceControlTrace:
    """Vertical end-effector force ramp with and without pulley-loss compensation.

    ``eta`` is the controller's belief, ``plant_eta`` the attenuation the
    simulated plant actually applies. ``tension_noise`` is the relative sd of
    multiplicative actuator tension error, seeded by ``seed``.
    """
    q = robot.posture if q is None else np.asarray(q, dtype=float)
    G = muscle_jacobian(robot, q)
    J = joint_jacobian(robot, q)
    if eta.shape != G.shape or plant_eta.shape != G.shape:
        raise ContractError("eta matrices must match the muscle Jacobian shape")
    rng = np.random.default_rng(seed)
    times = ramp.times()
    f_cmd = ramp.values()
    f_real = np.empty_like(f_cmd)
    tensions = np.empty((times.size, robot.m_wires))
    for k, fz in enumerate(f_cmd):
        tau_ref = joint_torque_from_force(J, np.array([0.0, fz]))
        if compensate:
            sol = solve_tension_compensated(tau_ref, G, eta, robot.torque_weights, robot.t_min, robot.t_max)
        else:
            sol = solve_tension(tau_ref, G, robot.torque_weights, robot.t_min, robot.t_max)
        T = sol.T_ref
        if tension_noise:
            T = np.maximum(T * (1.0 + tension_noise * rng.standard_normal(T.size)), 0.0)
        tau_real = torque_from_tension(G, T, plant_eta)
        f_real[k] = force_from_torque(J, tau_real)[1]
        tensions[k] = T
    rmse = float(np.sqrt(np.mean((f_cmd - f_real) ** 2)))
    return ForceControlTrace(times, f_cmd, f_real, tensions, compensate, rmse)


__all__ = [
    "GRAVITY", "TRACE_HEADER", "RigMode", "RigConfig", "ChirpSpec", "chirp", "chain_efficiency",
    "run_efficiency_rig", "SimTrace", "calibrated_linear_load_config", "run_linear_load", "ForceRamp",
    "ForceControlTrace", "run_force_control", "end_effector",
]
