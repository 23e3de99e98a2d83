"""Viscoelastic wire tension, internal-state stepping and creep elongation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .errors import ContractError, DomainError
from .pulley import WireSpec

MAX_DT = 1e-3  # s


class WireModelKind(enum.Enum):
    KELVIN_VOIGT = "kelvin-voigt"
    # series spring (secondary_stiffness) feeding a parallel spring/damper stage
    FOUR_ELEMENT = "four-element"


@dataclass(frozen=True)
class WireState:
    natural_length: float  # m, includes plastic_elongation
    stretched_length: float  # m
    strain_rate: float = 0.0  # 1/s
    internal_strain: float = 0.0  # strain of the parallel stage (four-element model)
    plastic_elongation: float = 0.0  # m

    def __post_init__(self):
        if self.natural_length <= 0:
            raise DomainError("natural_length must be positive")
        if self.plastic_elongation < 0:
            raise DomainError("plastic_elongation must be non-negative")

    @property
    def strain(self) -> float:
        return (self.stretched_length - self.natural_length) / self.natural_length

    @property
    def slack(self) -> bool:
        return self.strain <= 0.0


def tension(model: WireModelKind, spec: WireSpec, state: WireState) -> float:
    """Wire tension in N; zero whenever the wire is slack."""
    eps = state.strain
    if eps <= 0.0:
        return 0.0
    if model is WireModelKind.KELVIN_VOIGT:
        t = spec.axial_stiffness * eps + spec.axial_damping * state.strain_rate
    else:
        t = spec.secondary_stiffness * (eps - state.internal_strain)
    return max(0.0, t)


def step_internal(model: WireModelKind, spec: WireSpec, state: WireState, dt: float) -> WireState:
    """Advance the internal strain by one backward-Euler step.

    The parallel stage obeys ``k1 e1 + c de1/dt = k2 (eps - e1)`` while taut and
    relaxes with zero series force while slack.
    """
    if not 0.0 < dt <= MAX_DT:
        raise ContractError(f"dt must lie in (0, {MAX_DT}] s, got {dt}")
    if model is WireModelKind.KELVIN_VOIGT:
        return state
    k1, k2, c = spec.axial_stiffness, spec.secondary_stiffness, spec.axial_damping
    e1 = state.internal_strain
    eps = state.strain
    if eps > 0.0 and k2 * (eps - e1) > 0.0:
        e1_new = (c * e1 + dt * k2 * eps) / (c + dt * (k1 + k2))
    else:
        e1_new = c * e1 / (c + dt * k1)
    return replace(state, internal_strain=e1_new)


def internal_time_constant(spec: WireSpec) -> float:
    return spec.axial_damping / (spec.axial_stiffness + spec.secondary_stiffness)


@dataclass(frozen=True)
class CreepParams:
    """Logarithmic creep ``alpha * L0 * (T / tension_ref) * ln(1 + t / t0)``."""

    alpha: float
    t0: float  # s
    tension_ref: float  # N

    def __post_init__(self):
        if self.alpha < 0 or self.t0 <= 0 or self.tension_ref <= 0:
            raise DomainError("creep parameters must satisfy alpha >= 0, t0 > 0, tension_ref > 0")


def calibrate_creep(tension_n: float, duration_s: float, length_m: float, elongation_m: float,
                    t0: float = 60.0, tension_ref: float | None = None) -> CreepParams:
    """Creep parameters that reproduce one observed elongation exactly."""
    tension_ref = tension_n if tension_ref is None else tension_ref
    alpha = elongation_m / (length_m * (tension_n / tension_ref) * math.log1p(duration_s / t0))
    return CreepParams(alpha=alpha, t0=t0, tension_ref=tension_ref)


# 3 mm Dyneema (DB-100) loaded with 510 N for 12 h grew from 8.2 m to 8.6 m
DYNEEMA_CREEP = calibrate_creep(510.0, 12 * 3600.0, 8.2, 0.4)


def creep_elongation(spec: WireSpec | None, tension_n: float, duration_s: float, length_m: float,
                     params: CreepParams = DYNEEMA_CREEP) -> float:
    """Plastic elongation in m of a wire of initial length ``length_m``."""
    if duration_s < 0:
        raise ContractError(f"duration must be non-negative, got {duration_s}")
    if tension_n < 0:
        raise ContractError(f"tension must be non-negative, got {tension_n}")
    if length_m <= 0:
        raise DomainError("length must be positive")
    return params.alpha * length_m * (tension_n / params.tension_ref) * math.log1p(duration_s / params.t0)


def apply_plastic_elongation(state: WireState, delta: float) -> WireState:
    if delta < 0:
        raise DomainError("plastic elongation cannot decrease")
    return replace(
        state,
        natural_length=state.natural_length + delta,
        plastic_elongation=state.plastic_elongation + delta,
    )
