"""Shared phase-space types and the set-valued friction laws of the drill models.

Friction is always returned as a :class:`TorqueInterval`. While a disc slides
the interval is degenerate (``lo == hi``); at zero sliding velocity it is the
full breakaway interval available to hold the disc at rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ContractError(ValueError):
    """A caller supplied a value that violates an operation's precondition."""


class ConfigError(ValueError):
    """Invalid model name, parameter record or configuration text."""


@dataclass(frozen=True)
class TorqueInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DomainError(f"empty torque interval [{self.lo}, {self.hi}]")

    @classmethod
    def point(cls, value: float) -> "TorqueInterval":
        return cls(value, value)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    @property
    def value(self) -> float:
        """The single torque of a degenerate interval."""
        if not self.is_point:
            raise DomainError("interval is not single-valued")
        return self.lo

    def contains(self, torque: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= torque <= self.hi + tol

    def strictly_contains(self, torque: float) -> bool:
        return self.lo < torque < self.hi

    def __neg__(self) -> "TorqueInterval":
        return TorqueInterval(-self.hi, -self.lo)


@dataclass(frozen=True)
class State:
    """A phase-space point. ``names`` mirrors the owning model's labels."""

    coords: np.ndarray
    t: float = 0.0
    names: tuple[str, ...] = ()

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float).reshape(-1)
        if not np.all(np.isfinite(coords)):
            raise DomainError(f"non-finite state coordinates: {coords}")
        if self.names and len(self.names) != coords.size:
            raise DomainError(
                f"{coords.size} coordinates but {len(self.names)} names"
            )
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "names", tuple(self.names))

    def __len__(self):
        return self.coords.size

    def __getitem__(self, key):
        if isinstance(key, str):
            return float(self.coords[self.names.index(key)])
        return self.coords[key]

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.coords)}


@dataclass(frozen=True)
class UpperFrictionParams:
    """Asymmetric Coulomb + viscous friction on the motor-side disc."""

    T_su: float = field(default=0.37975, metadata={"desc": "upper static torque"})
    dT_su: float = field(default=-0.00575, metadata={"desc": "upper torque asymmetry"})
    b_u: float = field(default=2.4245, metadata={"desc": "upper viscous coefficient"})
    db_u: float = field(default=-0.0084, metadata={"desc": "upper viscous asymmetry"})

    def __post_init__(self):
        _require_finite(self)
        if not (self.T_su > 0 and self.T_su + self.dT_su > 0 and self.T_su - self.dT_su > 0):
            raise ConfigError("upper friction: breakaway interval must extend on both sides of zero")
        if not (self.b_u + self.db_u > 0 and self.b_u - self.db_u > 0):
            raise ConfigError("upper friction: viscous slope must be positive in both directions")

    def holding(self) -> TorqueInterval:
        return TorqueInterval(-self.T_su + self.dT_su, self.T_su + self.dT_su)


@dataclass(frozen=True)
class LowerFrictionParams:
    """Stribeck friction on the bit-side disc."""

    T_0: float = field(default=0.26, metadata={"desc": "lower breakaway torque"})
    T_sl: float = field(default=0.26, metadata={"desc": "lower static friction level"})
    T_pl: float = field(default=0.05, metadata={"desc": "lower Stribeck minimum level"})
    omega_sl: float = field(default=2.2, metadata={"desc": "Stribeck velocity"})
    delta_sl: float = field(default=1.5, metadata={"desc": "Stribeck exponent"})
    b_l: float = field(default=0.009, metadata={"desc": "lower viscous coefficient"})

    def __post_init__(self):
        _require_finite(self)
        if not self.T_0 > 0:
            raise ConfigError("lower friction: T_0 must be positive")
        if not self.T_sl > self.T_pl > 0:
            raise ConfigError("lower friction: need T_sl > T_pl > 0")
        if not (self.omega_sl > 0 and self.delta_sl > 0):
            raise ConfigError("lower friction: omega_sl and delta_sl must be positive")
        if not self.b_l >= 0:
            raise ConfigError("lower friction: b_l must be non-negative")

    def holding(self) -> TorqueInterval:
        return TorqueInterval(-self.T_0, self.T_0)


def _require_finite(record):
    for name, value in vars(record).items():
        if not math.isfinite(value):
            raise ConfigError(f"{type(record).__name__}.{name} must be finite, got {value}")


# Sliding branches. ``s`` is the branch sign (+1/-1); evaluating a branch
# slightly past zero velocity extends it smoothly, which the integrator needs
# inside a step that straddles an event.

@njit(cache=True)
def upper_slip_torque(omega, s, T_su, dT_su, b_u, db_u):
    return s * (T_su + dT_su * s + b_u * s * omega + db_u * omega)


@njit(cache=True)
def lower_slip_torque(omega, s, T_0, T_sl, T_pl, omega_sl, delta_sl, b_l):
    stribeck = math.exp(-abs(omega / omega_sl) ** delta_sl)
    return s * (T_0 / T_sl) * (T_pl + (T_sl - T_pl) * stribeck + b_l * s * omega)


def _check_velocity(omega):
    omega = float(omega)
    if not math.isfinite(omega):
        raise DomainError(f"non-finite angular velocity {omega}")
    return omega


def friction_upper(omega: float, p: UpperFrictionParams) -> TorqueInterval:
    """Upper-disc friction torque set at angular velocity ``omega``."""
    omega = _check_velocity(omega)
    if omega == 0.0:
        return p.holding()
    s = 1.0 if omega > 0 else -1.0
    return TorqueInterval.point(upper_slip_torque(omega, s, p.T_su, p.dT_su, p.b_u, p.db_u))


def friction_lower(omega: float, p: LowerFrictionParams) -> TorqueInterval:
    """Lower-disc (Stribeck) friction torque set at sliding velocity ``omega``."""
    omega = _check_velocity(omega)
    if omega == 0.0:
        return p.holding()
    s = 1.0 if omega > 0 else -1.0
    return TorqueInterval.point(
        lower_slip_torque(omega, s, p.T_0, p.T_sl, p.T_pl, p.omega_sl, p.delta_sl, p.b_l)
    )
