"""Event-driven integration of Filippov systems with stick-slip friction.

Between events an adaptive Dormand-Prince 5(4) pair advances one smooth mode.
When a sliding velocity reaches zero the event is resolved by the Filippov
condition: if the balance torque fits strictly inside the holding interval
the body sticks and its velocity is pinned, otherwise the trajectory crosses
to the opposite friction branch. A stuck body is released when its balance
torque reaches the boundary of the holding interval.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .core import ContractError, State

logger = logging.getLogger(__name__)

STICK_ONSET = "stick_onset"
STICK_RELEASE = "stick_release"
CROSSING = "crossing"
EVENT_KINDS = (STICK_ONSET, STICK_RELEASE, CROSSING)

_BUFFER = 4096
_MAX_STALLED_EVENTS = 50


class IntegrationError(RuntimeError):
    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


@dataclass(frozen=True)
class IntegrationConfig:
    t_end: float = 100.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float = 0.05
    event_tol: float = 1e-10
    stick_epsilon: float = 1e-6
    # 0 records every accepted step; > 0 records a uniform grid from dense output
    sample_dt: float = 0.0

    def __post_init__(self):
        for name in ("t_end", "rel_tol", "abs_tol", "max_step", "event_tol", "stick_epsilon"):
            value = getattr(self, name)
            if not (math.isfinite(value) or (name == "max_step" and value == math.inf)) or value <= 0:
                raise ContractError(f"IntegrationConfig.{name} must be positive, got {value}")
        if not (math.isfinite(self.sample_dt) and self.sample_dt >= 0):
            raise ContractError("IntegrationConfig.sample_dt must be >= 0")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    surface: int


@dataclass
class Trajectory:
    """Samples, event log and sliding-mode history of one run.

    ``t`` is strictly increasing and ``y[i]`` is the state at ``t[i]``; every
    event time also appears as a sample. ``mode_history`` lists
    ``(t_start, t_end, surface)`` for each interval a surface spent stuck.
    """

    names: tuple[str, ...]
    t: np.ndarray
    y: np.ndarray
    events: list[Event] = field(default_factory=list)
    mode_history: list[tuple[float, float, int]] = field(default_factory=list)
    config: IntegrationConfig | None = None
    model_name: str = ""
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    @property
    def samples(self):
        return [(float(t), State(y, t, self.names)) for t, y in zip(self.t, self.y)]

    def column(self, name: str) -> np.ndarray:
        return self.y[:, self.names.index(name)]

    @property
    def final_state(self) -> State:
        return State(self.y[-1], self.t[-1], self.names)

    def stick_intervals(self, surface: int, t_from: float = -math.inf):
        return [(a, b) for a, b, j in self.mode_history if j == surface and b > t_from]

    def in_stick(self, surface: int) -> np.ndarray:
        """Boolean mask of samples lying inside a stick interval of ``surface``."""
        mask = np.zeros(self.t.size, dtype=bool)
        for a, b in self.stick_intervals(surface):
            mask |= (self.t >= a) & (self.t <= b)
        return mask


class _Recorder:
    def __init__(self, dim):
        self.t_chunks = []
        self.y_chunks = []
        self.last_t = -math.inf
        self.dim = dim

    def add(self, t, y):
        if t > self.last_t:
            self.t_chunks.append(np.array([t]))
            self.y_chunks.append(np.array(y, dtype=float).reshape(1, self.dim))
            self.last_t = t

    def add_block(self, ts, ys):
        if ts.size == 0:
            return
        keep = ts > self.last_t
        if not keep.all():
            ts, ys = ts[keep], ys[keep]
            if ts.size == 0:
                return
        self.t_chunks.append(ts.copy())
        self.y_chunks.append(ys.copy())
        self.last_t = ts[-1]

    def arrays(self):
        return np.concatenate(self.t_chunks), np.concatenate(self.y_chunks)


def resolve_event(model, state, surface: int, event_tol: float = 1e-10) -> str:
    """``"slide"`` if the Filippov stick condition holds strictly, else ``"cross"``."""
    y = model._vec(state)
    s = model.surfaces[surface]
    g = s.guard(y)
    if abs(g) > event_tol:
        raise ContractError(f"state is {g:.3e} away from surface {s.name!r}")
    torque = s.balance_torque(y)
    return "slide" if s.holding_interval(y).strictly_contains(torque) else "cross"


def _release_sign(model, y, j):
    s = model.surfaces[j]
    interval = s.holding_interval(y)
    return 1 if s.balance_torque(y) > 0.5 * (interval.lo + interval.hi) else -1


def integrate(model, x0, cfg: IntegrationConfig | None = None, *,
              initial_mode=None, stop_on_release: int | None = None) -> Trajectory:
    """Integrate ``model`` from ``x0`` (a :class:`State` or coordinate array)."""
    cfg = cfg or IntegrationConfig()
    if isinstance(x0, State):
        y = model._vec(x0).copy()
        t = x0.t
    else:
        y = model._vec(x0).copy()
        t = 0.0
    t_end = t + cfg.t_end
    m = len(model.surfaces)
    mid = model.kind
    sidx, sref = model.surface_index, model.surface_ref
    slo, shi = model.surface_lo, model.surface_hi

    if initial_mode is None:
        mode = model.initial_mode(y, cfg.event_tol)
    else:
        mode = np.array(initial_mode, dtype=np.int64)
    for j in range(m):
        if mode[j] == 0 or abs(y[sidx[j]] - sref[j]) <= cfg.event_tol:
            y[sidx[j]] = sref[j]

    events: list[Event] = []
    history: list[tuple[float, float, int]] = []
    stick_start = {j: t for j in range(m) if mode[j] == 0}
    excursion = np.full(m, math.inf)  # peak |guard| since the last release
    rec = _Recorder(model.dim)
    rec.add(t, y)

    if cfg.sample_dt > 0:
        cap = max(_BUFFER, int(min(cfg.max_step, cfg.t_end) / cfg.sample_dt) + 16)
    else:
        cap = _BUFFER
    out_t = np.empty(cap)
    out_y = np.empty((cap, model.dim))
    counters = np.zeros(3, dtype=np.int64)
    h = min(1e-3, cfg.max_step, cfg.t_end)
    stalled = 0
    released_stop = None
    fresh = True
    armed = np.zeros(max(m, 1), dtype=np.bool_)

    def close_stick(j, t_now):
        history.append((stick_start.pop(j), t_now, j))

    while True:
        if fresh:
            armed[:] = False
            if m:
                g = np.empty(m)
                _kernel.guards(mid, y, mode, model.pvec, sidx, sref, slo, shi,
                               np.empty(m), g)
                armed[:m] = g > 0
        gmax = np.zeros(max(m, 1))
        status, n, t_new, y_new, h, j = _kernel.advance(
            mid, y, t, t_end, mode, model.pvec,
            sidx, sref, slo, shi, armed,
            cfg.rel_tol, cfg.abs_tol, h, cfg.max_step, cfg.event_tol, cfg.sample_dt,
            out_t, out_y, gmax, counters,
        )
        rec.add_block(out_t[:n], out_y[:n])
        if m:
            excursion = _track(excursion, gmax[:m])
        progressed = t_new > t
        t, y = t_new, np.array(y_new)

        if status == _kernel.DONE:
            rec.add(t, y)
            break
        if status == _kernel.BUFFER_FULL:
            fresh = False
            continue
        if status == _kernel.UNDERFLOW:
            raise IntegrationError(f"step size underflow at t={t:.9g}, state={y}", t, y)
        if status == _kernel.NONFINITE:
            bad = [model.names[i] for i in range(model.dim)
                   if not np.isfinite(model.evaluate(y, mode)[i])] or list(model.names)
            raise IntegrationError(
                f"non-finite derivative at t={t:.9g} in {', '.join(bad)}", t, y)

        stalled = 0 if progressed else stalled + 1
        if stalled > _MAX_STALLED_EVENTS:
            raise IntegrationError(
                f"event chattering on surface {model.surfaces[j].name!r} at t={t:.9g}", t, y)
        fresh = True
        surf = model.surfaces[j]

        if mode[j] != 0:
            # sliding velocity reached the surface (or turned back right away)
            y[surf.stuck_coordinate] = surf.reference
            rec.add(t, y)
            decision = resolve_event(model, y, j, cfg.event_tol)
            interval = surf.holding_interval(y)
            torque = surf.balance_torque(y)
            if status == _kernel.IMMEDIATE:
                decision = "slide"
            elif (decision == "cross" and excursion[j] < cfg.stick_epsilon
                    and interval.contains(torque, cfg.event_tol)):
                decision = "slide"
            if decision == "slide":
                mode[j] = 0
                stick_start[j] = t
                events.append(Event(t, STICK_ONSET, j))
            else:
                mode[j] = 1 if torque >= interval.hi else -1
                events.append(Event(t, CROSSING, j))
                excursion[j] = math.inf
        else:
            rec.add(t, y)
            close_stick(j, t)
            mode[j] = _release_sign(model, y, j)
            events.append(Event(t, STICK_RELEASE, j))
            excursion[j] = 0.0
            if stop_on_release == j:
                released_stop = (t, y.copy())
                break

    for j in sorted(stick_start):
        close_stick(j, t)
    history.sort(key=lambda r: (r[0], r[2]))
    ts, ys = rec.arrays()
    traj = Trajectory(
        names=model.names, t=ts, y=ys, events=events, mode_history=history,
        config=cfg, model_name=model.name,
        stats={"steps": int(counters[0]), "rejected": int(counters[1]),
               "rhs_evals": int(counters[2]), "final_mode": mode.tolist()},
    )
    if stop_on_release is not None:
        traj.stats["released"] = released_stop
    return traj


def _track(excursion, gmax):
    out = excursion.copy()
    live = np.isfinite(out)
    out[live] = np.maximum(out[live], gmax[live])
    return out


def integrate_sliding(model, state, surface: int, cfg: IntegrationConfig | None = None):
    """Integrate with ``surface`` stuck until it releases or ``t_end``.

    Returns ``(segment, release_state)``; ``release_state`` is ``None`` when
    the body is still stuck at the end of the horizon.
    """
    cfg = cfg or IntegrationConfig()
    y = model._vec(state).copy()
    t0 = state.t if isinstance(state, State) else 0.0
    if resolve_event(model, y, surface, cfg.event_tol) != "slide":
        raise ContractError(f"surface {model.surfaces[surface].name!r} cannot hold at this state")
    mode = model.initial_mode(y, cfg.event_tol)
    mode[surface] = 0
    seg = integrate(model, State(y, t0), cfg, initial_mode=mode, stop_on_release=surface)
    released = seg.stats.pop("released")
    release_state = None if released is None else State(released[1], released[0], model.names)
    return seg, release_state
