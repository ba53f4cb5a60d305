"""The three electromechanical systems and their common model contract.

Every model is a piecewise-smooth vector field. A switching surface is the
zero-velocity set of one friction-loaded disc; on it the friction torque is
set-valued and the integrator decides between sticking and crossing.

Drill-string states
-------------------
``drill_dc``
    ``(alpha, omega_u, omega_l, theta_u)`` with ``alpha = theta_u - theta_l``.
    The dynamics only see ``alpha``; ``theta_u`` is carried along as an
    ignorable odometer coordinate and is dropped for equilibrium analysis.
``drill_induction``
    ``(theta_u, omega_u, theta_l, omega_l, i_1, i_2, i_3)`` in the frame of the
    rotating magnetic field. Normal operation is a relative equilibrium, an
    equilibrium of the reduced coordinates ``(alpha, omega_u, omega_l, i_d, i_q)``
    obtained by a Park transform of the coil currents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from . import _fields
from .core import (
    ConfigError,
    ContractError,
    LowerFrictionParams,
    State,
    TorqueInterval,
    UpperFrictionParams,
)

TWO_PI_3 = _fields.TWO_PI_3


# ---------------------------------------------------------------------------
# parameter records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ToraParams:
    J: float = field(default=0.014, metadata={"desc": "rotor moment of inertia"})
    M: float = field(default=10.5, metadata={"desc": "cart mass"})
    m: float = field(default=1.5, metadata={"desc": "eccentric mass"})
    l: float = field(default=0.04, metadata={"desc": "eccentricity length"})
    k_theta: float = field(default=0.005, metadata={"desc": "rotational damping"})
    k: float = field(default=5300.0, metadata={"desc": "spring stiffness"})
    k1: float = field(default=5.0, metadata={"desc": "translational damping"})
    u: float = field(default=0.48, metadata={"desc": "motor torque"})

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ConfigError(f"ToraParams.{f.name} must be finite")
        for name in ("J", "M", "m", "l", "k"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"ToraParams.{name} must be positive")
        if self.k_theta < 0 or self.k1 < 0:
            raise ConfigError("ToraParams damping coefficients must be non-negative")
        if not (self.M + self.m) * self.J > (self.m * self.l) ** 2:
            raise ConfigError("ToraParams: mass matrix is not uniformly invertible")


@dataclass(frozen=True)
class DrillDcParams:
    J_u: float = field(default=0.4765, metadata={"desc": "upper disc inertia"})
    J_l: float = field(default=0.035, metadata={"desc": "lower disc inertia"})
    k_theta: float = field(default=0.075, metadata={"desc": "torsional stiffness"})
    b: float = field(default=0.0, metadata={"desc": "mutual rotational damping"})
    k_m: float = field(default=4.3228, metadata={"desc": "motor constant"})
    v: float = field(default=3.5207, metadata={"desc": "motor input voltage"})
    upper: UpperFrictionParams = field(default_factory=UpperFrictionParams)
    lower: LowerFrictionParams = field(
        default_factory=lambda: LowerFrictionParams(T_0=0.26, b_l=0.009)
    )

    def __post_init__(self):
        for name in ("J_u", "J_l", "k_theta", "b", "k_m", "v"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"DrillDcParams.{name} must be finite")
        if not (self.J_u > 0 and self.J_l > 0 and self.k_theta > 0 and self.k_m > 0):
            raise ConfigError("DrillDcParams: J_u, J_l, k_theta and k_m must be positive")
        if self.b < 0:
            raise ConfigError("DrillDcParams: b must be non-negative")


@dataclass(frozen=True)
class DrillInductionParams:
    J_u: float = field(default=0.4765, metadata={"desc": "upper disc (rotor) inertia"})
    J_l: float = field(default=0.035, metadata={"desc": "lower disc inertia"})
    k_theta: float = field(default=0.075, metadata={"desc": "torsional stiffness"})
    b: float = field(default=0.0, metadata={"desc": "mutual rotational damping"})
    a: float = field(default=2.1, metadata={"desc": "motor torque coefficient"})
    c: float = field(default=10.0, metadata={"desc": "coil current decay rate"})
    omega_field: float = field(default=8.0, metadata={"desc": "magnetic field speed"})
    lower: LowerFrictionParams = field(
        default_factory=lambda: LowerFrictionParams(T_0=0.25, b_l=0.009)
    )

    def __post_init__(self):
        for name in ("J_u", "J_l", "k_theta", "b", "a", "c", "omega_field"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"DrillInductionParams.{name} must be finite")
        if not (self.a > 0 and self.c > 0 and self.omega_field > 0):
            raise ConfigError("DrillInductionParams: a, c and omega_field must be positive")
        if not (self.J_u > 0 and self.J_l > 0 and self.k_theta > 0) or self.b < 0:
            raise ConfigError("DrillInductionParams: inertias/stiffness positive, b >= 0")

    @property
    def coupling(self) -> float:
        """Per-coil flux coupling n*B*S (coil inductance normalised to one).

        ``a`` is the torque coefficient of the two-axis motor model,
        ``a = 3 (nBS)^2 / (2 J_u L)``.
        """
        return math.sqrt(2.0 * self.a * self.J_u / 3.0)


# ---------------------------------------------------------------------------
# model contract
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SwitchingSurface:
    """Zero sliding-velocity set of one friction-loaded body."""

    name: str
    index: int
    stuck_coordinate: int
    reference: float
    holding_interval: Callable[[np.ndarray], TorqueInterval]
    balance_torque: Callable[[np.ndarray], float]

    def guard(self, y) -> float:
        return float(np.asarray(y, dtype=float)[self.stuck_coordinate] - self.reference)


class SystemModel:
    """A piecewise-smooth system integrable by :func:`~.integrator.integrate`.

    Parameters
    ----------
    names : tuple of str
        Coordinate labels; ``dim = len(names)``.
    kind : int
        Vector-field id in :mod:`hidden_attractors._fields`.
    pvec : ndarray
        Flat parameter vector handed to the callbacks.
    surfaces : list of (name, stuck_coordinate, reference, lo, hi)
        Switching surfaces with constant holding intervals ``[lo, hi]``.
    velocity_names : tuple of str
        Coordinates averaged in steady-state reports.
    oscillation_name : str
        Coordinate whose peaks define amplitude and period.
    rotor_name : str, optional
        Rotor velocity used for the Sommerfeld ratio.
    no_load_speed : float, optional
        Rotor speed without structural coupling; enables the
        ``captured_rotation`` label.
    """

    reduced_names: tuple[str, ...]
    velocity_scale = 10.0
    # horizon long enough for transients to die out at default parameters
    default_t_end = 100.0

    def __init__(self, names, kind, pvec, surfaces=(), params=None, *,
                 name="custom", velocity_names=(), oscillation_name=None,
                 rotor_name=None, no_load_speed=None):
        self.name = name
        self.names = tuple(names)
        self.params = params
        self.kind = int(kind)
        self.pvec = np.ascontiguousarray(pvec, dtype=float)
        self.velocity_names = tuple(velocity_names)
        self.oscillation_name = oscillation_name or self.names[-1]
        self.rotor_name = rotor_name
        self.no_load_speed = no_load_speed
        self.reduced_names = self.names
        surf = []
        for j, (sname, idx, ref, lo, hi) in enumerate(surfaces):
            interval = TorqueInterval(lo, hi)
            surf.append(SwitchingSurface(
                name=sname, index=j, stuck_coordinate=idx, reference=float(ref),
                holding_interval=lambda y, _i=interval: _i,
                balance_torque=lambda y, _j=j: float(self.balances(y)[_j]),
            ))
        self.surfaces = tuple(surf)
        m = len(surf)
        self.surface_index = np.array([s.stuck_coordinate for s in surf], dtype=np.int64)
        self.surface_ref = np.array([s.reference for s in surf], dtype=float)
        self.surface_lo = np.array([lo for *_, lo, _ in surfaces], dtype=float).reshape(m)
        self.surface_hi = np.array([hi for *_, hi in surfaces], dtype=float).reshape(m)

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"model {self.name!r} has no coordinate {name!r}") from None

    def surface(self, key) -> SwitchingSurface:
        if isinstance(key, str):
            for s in self.surfaces:
                if s.name == key:
                    return s
            raise ConfigError(f"model {self.name!r} has no surface {key!r}")
        return self.surfaces[key]

    def __repr__(self):
        return f"<SystemModel {self.name} dim={self.dim} surfaces={len(self.surfaces)}>"

    # -- evaluation -------------------------------------------------------

    def _vec(self, y) -> np.ndarray:
        y = np.ascontiguousarray(y.coords if isinstance(y, State) else y, dtype=float)
        if y.shape != (self.dim,):
            raise ContractError(f"{self.name}: expected {self.dim} coordinates, got {y.shape}")
        return y

    def balances(self, y) -> np.ndarray:
        out = np.zeros(max(len(self.surfaces), 1))
        _fields.balance(self.kind, self._vec(y), self.pvec, out)
        return out[: len(self.surfaces)]

    def slip_friction(self, j: int, omega: float, s: float) -> float:
        return float(_fields.slip(self.kind, j, float(omega), float(s), self.pvec))

    def with_friction(self, y, friction) -> np.ndarray:
        """Derivative for explicitly chosen friction torques (one per surface)."""
        y = self._vec(y)
        dy = np.empty(self.dim)
        fr = np.zeros(max(len(self.surfaces), 1))
        fr[: len(self.surfaces)] = friction
        _fields.assemble(self.kind, y, self.pvec, fr, dy)
        return dy

    def evaluate(self, y, mode) -> np.ndarray:
        """Derivative on the smooth branch ``mode`` (0 = stuck, +-1 = slip sign)."""
        y = self._vec(y)
        fr = np.empty(len(self.surfaces))
        bal = self.balances(y)
        for j, s in enumerate(self.surfaces):
            fr[j] = bal[j] if mode[j] == 0 else self.slip_friction(j, y[s.stuck_coordinate], mode[j])
        dy = self.with_friction(y, fr)
        for j, s in enumerate(self.surfaces):
            if mode[j] == 0:
                dy[s.stuck_coordinate] = 0.0
        return dy

    def friction_set(self, y, j: int) -> TorqueInterval:
        y = self._vec(y)
        s = self.surfaces[j]
        w = y[s.stuck_coordinate] - s.reference
        if w == 0.0:
            return s.holding_interval(y)
        return TorqueInterval.point(self.slip_friction(j, y[s.stuck_coordinate], math.copysign(1.0, w)))

    def rhs(self, state, branch=None) -> np.ndarray:
        """Derivative with one friction torque chosen per surface.

        ``branch[j]`` must lie in the friction set of surface ``j``. A
        ``None`` entry (or ``branch=None``) selects the single-valued sliding
        torque, or at zero sliding velocity the Filippov holding torque
        (balance torque clipped to the holding interval).
        """
        y = self._vec(state)
        m = len(self.surfaces)
        branch = [None] * m if branch is None else list(branch)
        if len(branch) != m:
            raise ContractError(f"{self.name}: branch needs {m} entries")
        bal = self.balances(y)
        fr = np.empty(m)
        for j in range(m):
            allowed = self.friction_set(y, j)
            if branch[j] is None:
                fr[j] = min(max(bal[j], allowed.lo), allowed.hi)
            else:
                if not allowed.contains(branch[j]):
                    raise ContractError(
                        f"{self.name}: friction {branch[j]} outside "
                        f"[{allowed.lo}, {allowed.hi}] on surface {self.surfaces[j].name!r}"
                    )
                fr[j] = branch[j]
        return self.with_friction(y, fr)

    def initial_mode(self, y, event_tol: float = 0.0) -> np.ndarray:
        """Stick/slip assignment for a state; entries on a surface snap to it."""
        y = self._vec(y)
        mode = np.zeros(len(self.surfaces), dtype=np.int64)
        bal = self.balances(y)
        for j, s in enumerate(self.surfaces):
            g = y[s.stuck_coordinate] - s.reference
            if abs(g) > event_tol:
                mode[j] = 1 if g > 0 else -1
                continue
            interval = s.holding_interval(y)
            if interval.strictly_contains(bal[j]):
                mode[j] = 0
            else:
                mode[j] = 1 if bal[j] > 0.5 * (interval.lo + interval.hi) else -1
        return mode

    # -- reduced coordinates (identity unless a model overrides) ----------

    def reduce(self, Y) -> np.ndarray:
        return np.array(Y, dtype=float)

    def lift(self, z) -> np.ndarray:
        return np.array(z, dtype=float)

    def reduced_rhs(self, z, mode=None) -> np.ndarray:
        y = self.lift(z)
        if mode is None:
            mode = self.initial_mode(y)
        return self.reduce(self.evaluate(y, mode))

    def equilibrium_speed_residual(self, w: float):
        """Scalar steady-rotation equation, or ``None`` if the model has none."""
        return None

    def equilibrium_at_speed(self, w: float) -> np.ndarray:
        raise NotImplementedError

    def stuck_equilibria(self) -> list[tuple[np.ndarray, tuple[float, float] | None]]:
        return []

    def energy(self, y) -> float:
        raise NotImplementedError


class ToraModel(SystemModel):
    def __init__(self, p: ToraParams):
        super().__init__(
            ("x", "x_dot", "theta", "theta_dot"),
            _fields.TORA,
            [p.J, p.M, p.m, p.l, p.k_theta, p.k, p.k1, p.u],
            params=p, name="tora", velocity_names=("theta_dot",),
            oscillation_name="x", rotor_name="theta_dot",
            no_load_speed=(p.u / p.k_theta if p.k_theta > 0 else None),
        )
        self.velocity_scale = 2.0 * (self.no_load_speed or 50.0)
        self.default_t_end = 300.0

    def __reduce__(self):
        return (build_model, (self.name, self.params))

    def mass_matrix(self, theta: float) -> np.ndarray:
        p = self.params
        c = p.m * p.l * math.cos(theta)
        return np.array([[p.M + p.m, c], [c, p.J]])

    def energy(self, y) -> float:
        p = self.params
        x, xd, th, thd = self._vec(y)
        return (0.5 * (p.M + p.m) * xd**2 + p.m * p.l * xd * thd * math.cos(th)
                + 0.5 * p.J * thd**2 + 0.5 * p.k * x**2)


class DrillDcModel(SystemModel):
    def __init__(self, p: DrillDcParams):
        u, lw = p.upper, p.lower
        hu, hl = u.holding(), lw.holding()
        super().__init__(
            ("alpha", "omega_u", "omega_l", "theta_u"),
            _fields.DRILL_DC,
            [p.J_u, p.J_l, p.k_theta, p.b, p.k_m, p.v,
             u.T_su, u.dT_su, u.b_u, u.db_u,
             lw.T_0, lw.T_sl, lw.T_pl, lw.omega_sl, lw.delta_sl, lw.b_l],
            surfaces=[("upper", 1, 0.0, hu.lo, hu.hi), ("lower", 2, 0.0, hl.lo, hl.hi)],
            params=p, name="drill_dc", velocity_names=("omega_u", "omega_l"),
            oscillation_name="omega_l", rotor_name="omega_u",
        )
        self.reduced_names = ("alpha", "omega_u", "omega_l")
        self.velocity_scale = 20.0
        self.default_t_end = 400.0

    def __reduce__(self):
        return (build_model, (self.name, self.params))

    def reduce(self, Y):
        return np.array(Y, dtype=float)[..., :3]

    def lift(self, z):
        z = np.asarray(z, dtype=float)
        return np.array([z[0], z[1], z[2], 0.0])

    def equilibrium_speed_residual(self, w):
        if w == 0.0:
            return None
        s = math.copysign(1.0, w)
        p = self.params
        return (self.slip_friction(0, w, s) + self.slip_friction(1, w, s) - p.k_m * p.v)

    def equilibrium_at_speed(self, w):
        s = math.copysign(1.0, w)
        alpha = self.slip_friction(1, w, s) / self.params.k_theta
        return np.array([alpha, w, w])

    def stuck_equilibria(self):
        p = self.params
        hu, hl = p.upper.holding(), p.lower.holding()
        drive = p.k_m * p.v
        # alpha with k_theta*alpha in the lower interval and drive - k_theta*alpha in the upper one
        lo = max(hl.lo, drive - hu.hi) / p.k_theta
        hi = min(hl.hi, drive - hu.lo) / p.k_theta
        if lo > hi:
            return []
        return [(np.array([0.5 * (lo + hi), 0.0, 0.0]), (lo, hi))]


class DrillInductionModel(SystemModel):
    def __init__(self, p: DrillInductionParams):
        hl = p.lower.holding()
        lw = p.lower
        super().__init__(
            ("theta_u", "omega_u", "theta_l", "omega_l", "i_1", "i_2", "i_3"),
            _fields.DRILL_INDUCTION,
            [p.J_u, p.J_l, p.k_theta, p.b, p.a, p.c, p.omega_field, p.coupling,
             lw.T_0, lw.T_sl, lw.T_pl, lw.omega_sl, lw.delta_sl, lw.b_l],
            surfaces=[("lower", 3, -p.omega_field, hl.lo, hl.hi)],
            params=p, name="drill_induction", velocity_names=("omega_u", "omega_l"),
            oscillation_name="omega_l", rotor_name="omega_u",
        )
        self.reduced_names = ("alpha", "omega_u", "omega_l", "i_d", "i_q")
        self.velocity_scale = 2.0 * p.omega_field
        self.default_t_end = 400.0

    def __reduce__(self):
        return (build_model, (self.name, self.params))

    def motor_torque(self, w: float) -> float:
        """Steady motor torque at constant speed ``w`` relative to the field."""
        p = self.params
        g = p.coupling
        return -1.5 * g * g * w * p.c / (p.c**2 + w**2)

    def reduce(self, Y):
        Y = np.asarray(Y, dtype=float)
        th = Y[..., 0]
        phases = th[..., None] + TWO_PI_3 * np.arange(3)
        i = Y[..., 4:7]
        i_d = (2.0 / 3.0) * np.sum(i * np.cos(phases), axis=-1)
        i_q = (2.0 / 3.0) * np.sum(i * np.sin(phases), axis=-1)
        return np.stack([Y[..., 0] - Y[..., 2], Y[..., 1], Y[..., 3], i_d, i_q], axis=-1)

    def lift(self, z):
        alpha, wu, wl, i_d, i_q = np.asarray(z, dtype=float)
        phases = TWO_PI_3 * np.arange(3)
        i = i_d * np.cos(phases) + i_q * np.sin(phases)
        return np.array([0.0, wu, -alpha, wl, *i])

    def reduced_rhs(self, z, mode=None):
        p = self.params
        g = p.coupling
        alpha, wu, wl, i_d, i_q = np.asarray(z, dtype=float)
        torsion = p.k_theta * alpha + p.b * (wu - wl)
        if mode is None:
            friction = self.rhs_friction(alpha, wu, wl)
        elif mode[0] == 0:
            friction = torsion
        else:
            friction = self.slip_friction(0, wl, mode[0])
        dwl = 0.0 if (mode is not None and mode[0] == 0) else (torsion - friction) / p.J_l
        return np.array([
            wu - wl,
            (1.5 * g * i_q - torsion) / p.J_u,
            dwl,
            -p.c * i_d - wu * i_q,
            -p.c * i_q + wu * i_d - g * wu,
        ])

    def rhs_friction(self, alpha, wu, wl):
        p = self.params
        w = wl + p.omega_field
        torsion = p.k_theta * alpha + p.b * (wu - wl)
        if w == 0.0:
            hl = p.lower.holding()
            return min(max(torsion, hl.lo), hl.hi)
        return self.slip_friction(0, wl, math.copysign(1.0, w))

    def equilibrium_speed_residual(self, w):
        p = self.params
        rel = w + p.omega_field
        if rel == 0.0:
            return None
        return self.motor_torque(w) - self.slip_friction(0, w, math.copysign(1.0, rel))

    def equilibrium_at_speed(self, w):
        p = self.params
        g = p.coupling
        i_q = -g * w * p.c / (p.c**2 + w**2)
        i_d = -w * i_q / p.c
        alpha = 1.5 * g * i_q / p.k_theta
        return np.array([alpha, w, w, i_d, i_q])

    def stuck_equilibria(self):
        p = self.params
        w = -p.omega_field
        torque = self.motor_torque(w)
        if p.lower.holding().strictly_contains(torque):
            return [(self.equilibrium_at_speed(w), None)]
        return []


@dataclass(frozen=True)
class OscillatorParams:
    """Unit-mass spring oscillator with optional Coulomb friction ``mu``."""

    omega0: float = field(default=1.0, metadata={"desc": "natural frequency"})
    damping: float = field(default=0.0, metadata={"desc": "viscous damping"})
    forcing: float = field(default=0.0, metadata={"desc": "constant force"})
    mu: float = field(default=0.0, metadata={"desc": "Coulomb friction level"})

    def __post_init__(self):
        if not (self.omega0 > 0 and self.damping >= 0 and self.mu >= 0):
            raise ConfigError("OscillatorParams: omega0 > 0, damping >= 0, mu >= 0")


class OscillatorModel(SystemModel):
    """Benchmark with closed-form solutions for integrator checks."""

    def __init__(self, p: OscillatorParams):
        surfaces = [("mass", 1, 0.0, -p.mu, p.mu)] if p.mu > 0 else []
        super().__init__(
            ("x", "v"), _fields.OSCILLATOR, [p.omega0**2, p.damping, p.forcing, p.mu],
            surfaces=surfaces, params=p, name="oscillator",
            velocity_names=("v",), oscillation_name="x",
        )

    def __reduce__(self):
        return (build_model, (self.name, self.params))

    def energy(self, y):
        x, v = self._vec(y)
        return 0.5 * v * v + 0.5 * self.params.omega0**2 * x * x


_BUILDERS = {
    "tora": (ToraModel, ToraParams),
    "drill_dc": (DrillDcModel, DrillDcParams),
    "drill_induction": (DrillInductionModel, DrillInductionParams),
    "oscillator": (OscillatorModel, OscillatorParams),
}

MODEL_NAMES = ("tora", "drill_dc", "drill_induction")


def default_params(name: str):
    if name not in _BUILDERS:
        raise ConfigError(f"unknown model {name!r}; expected one of {', '.join(_BUILDERS)}")
    return _BUILDERS[name][1]()


def build_model(name: str, params=None) -> SystemModel:
    """Instantiate ``tora``, ``drill_dc``, ``drill_induction`` (or the ``oscillator`` benchmark)."""
    if name not in _BUILDERS:
        raise ConfigError(f"unknown model {name!r}; expected one of {', '.join(_BUILDERS)}")
    cls, pcls = _BUILDERS[name]
    if params is None:
        params = pcls()
    elif not isinstance(params, pcls):
        raise ConfigError(f"model {name!r} needs {pcls.__name__}, got {type(params).__name__}")
    return cls(params)


def tora_rhs(state, p: ToraParams) -> np.ndarray:
    """(x_dot, x_ddot, theta_dot, theta_ddot) from the exact 2x2 mass-matrix solve."""
    return build_model("tora", p).rhs(state)


def drill_dc_rhs(state, branch, p: DrillDcParams) -> np.ndarray:
    return build_model("drill_dc", p).rhs(state, branch)


def drill_induction_rhs(state, branch, p: DrillInductionParams) -> np.ndarray:
    return build_model("drill_induction", p).rhs(state, branch)


def with_params(params, **overrides):
    """Copy of a parameter record; friction fields may be given flat."""
    nested = {}
    top = {}
    for key, value in overrides.items():
        for sub in ("upper", "lower"):
            record = getattr(params, sub, None)
            if record is not None and key in {f.name for f in fields(record)}:
                nested.setdefault(sub, {})[key] = value
                break
        else:
            top[key] = value
    for sub, vals in nested.items():
        top[sub] = replace(getattr(params, sub), **vals)
    try:
        return replace(params, **top)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
