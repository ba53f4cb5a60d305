"""Equilibria, steady-state metrics and hidden/self-excited classification.

An attractor is *self-excited* if its basin of attraction intersects a small
neighbourhood of some equilibrium, and *hidden* otherwise. A system without
equilibria therefore has only hidden attractors. Classification here is
empirical: probe trajectories are launched from random points near each
equilibrium and compared with the attractor's steady-state metrics.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .core import ConfigError, ContractError, DomainError, State
from .integrator import IntegrationConfig, IntegrationError, Trajectory, integrate

logger = logging.getLogger(__name__)

EQUILIBRIUM = "equilibrium"
LIMIT_CYCLE = "limit_cycle"
CAPTURED_ROTATION = "captured_rotation"
UNRESOLVED = "unresolved"
KINDS = (EQUILIBRIUM, LIMIT_CYCLE, CAPTURED_ROTATION, UNRESOLVED)

HIDDEN = "hidden"
SELF_EXCITED = "self_excited"
NOT_APPLICABLE = "not_applicable"

MATCH_RTOL = 0.02


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    """A rest point of the reduced dynamics.

    ``stable`` is ``None`` when the Jacobian is numerically singular. Stuck
    equilibria lie on every switching surface; their linearisation is not
    defined, so ``eigen_max_real`` is ``nan``. ``family`` gives the range of
    the torsion angle when the rest state is one member of a continuum.
    """

    state: State
    reduced: np.ndarray
    residual_norm: float
    eigen_max_real: float
    stable: bool | None
    stuck: bool = False
    family: tuple[float, float] | None = None
    eigenvalues: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "state": self.state.as_dict(),
            "reduced": [float(v) for v in self.reduced],
            "residual_norm": float(self.residual_norm),
            "eigen_max_real": _json_float(self.eigen_max_real),
            "stable": self.stable,
            "stuck": self.stuck,
            "family": None if self.family is None else [float(v) for v in self.family],
        }


@dataclass(frozen=True)
class Probe:
    """One trajectory launched near an equilibrium.

    ``converged`` is ``True`` if it reached the classified attractor, ``False``
    if it went elsewhere and ``None`` if the integration failed.
    """

    equilibrium: int
    perturbation: tuple[float, ...]
    converged: bool | None
    kind: str = UNRESOLVED
    means: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "equilibrium": self.equilibrium,
            "perturbation": list(self.perturbation),
            "converged": self.converged,
            "kind": self.kind,
            "means": dict(self.means),
        }


@dataclass
class AttractorReport:
    """Steady-state summary of one trajectory's tail window."""

    kind: str
    tail_mean_velocities: dict[str, float]
    amplitude: float
    period_estimate: float | None = None
    classification: str | None = None
    probes: list[Probe] = field(default_factory=list)
    rotor: str | None = None
    tail_ranges: dict[str, float] = field(default_factory=dict)
    tail_stick_intervals: dict[str, int] = field(default_factory=dict)
    tail_window: tuple[float, float] | None = None
    model_name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown attractor kind {self.kind!r}")

    @property
    def rotor_mean(self) -> float:
        if self.rotor is None or self.rotor not in self.tail_mean_velocities:
            raise DomainError("report carries no rotor velocity")
        return self.tail_mean_velocities[self.rotor]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "classification": self.classification,
            "tail_mean_velocities": dict(self.tail_mean_velocities),
            "amplitude": float(self.amplitude),
            "period_estimate": self.period_estimate,
            "rotor": self.rotor,
            "tail_ranges": dict(self.tail_ranges),
            "tail_stick_intervals": dict(self.tail_stick_intervals),
            "tail_window": None if self.tail_window is None else list(self.tail_window),
            "model_name": self.model_name,
            "probes": [p.to_dict() for p in self.probes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AttractorReport":
        probes = [Probe(p["equilibrium"], tuple(p["perturbation"]), p["converged"],
                        p["kind"], dict(p["means"])) for p in d.get("probes", [])]
        window = d.get("tail_window")
        return cls(
            kind=d["kind"], tail_mean_velocities=dict(d["tail_mean_velocities"]),
            amplitude=d["amplitude"], period_estimate=d.get("period_estimate"),
            classification=d.get("classification"), probes=probes, rotor=d.get("rotor"),
            tail_ranges=dict(d.get("tail_ranges", {})),
            tail_stick_intervals=dict(d.get("tail_stick_intervals", {})),
            tail_window=None if window is None else tuple(window),
            model_name=d.get("model_name", ""),
        )


@dataclass(frozen=True)
class GridAxis:
    """One scan axis; every coordinate in ``names`` takes the same value."""

    names: tuple[str, ...]
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        names = (self.names,) if isinstance(self.names, str) else tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names or self.n < 1 or not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigError(f"invalid grid axis {self}")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)

    @property
    def label(self) -> str:
        return "=".join(self.names)


@dataclass(frozen=True)
class BasinGrid:
    axes: tuple[GridAxis, ...]
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not 1 <= len(self.axes) <= 2:
            raise ConfigError("a basin grid has one or two axes")
        seen = [n for a in self.axes for n in a.names]
        if len(seen) != len(set(seen)) or set(seen) & set(self.fixed):
            raise ConfigError("grid axes and fixed coordinates must not overlap")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.n for a in self.axes)


@dataclass
class BasinMap:
    """Attractor label per grid cell; ``-1`` marks unresolved or failed cells."""

    axes: tuple[GridAxis, ...]
    labels: np.ndarray
    attractors: list[AttractorReport]
    fixed: dict

    UNRESOLVED_LABEL = -1

    @property
    def values(self) -> list[np.ndarray]:
        return [a.values for a in self.axes]

    def to_dict(self) -> dict:
        return {
            "axes": [{"names": list(a.names), "lo": a.lo, "hi": a.hi, "n": a.n} for a in self.axes],
            "fixed": dict(self.fixed),
            "labels": self.labels.tolist(),
            "attractors": [r.to_dict() for r in self.attractors],
        }


def _json_float(x):
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# equilibria
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquilibriumSearch:
    """Multi-start settings for :func:`find_equilibria`.

    ``velocity_range`` defaults to ``+-model.velocity_scale``.
    """

    velocity_range: tuple[float, float] | None = None
    n_starts: int = 9
    n_grid: int = 2001
    tol: float = 1e-9
    dedupe_tol: float = 1e-6
    max_iter: int = 60


def _fd_jacobian(f, x, f0=None):
    x = np.asarray(x, dtype=float)
    n = x.size
    jac = np.empty((f(x).size if f0 is None else f0.size, n))
    for i in range(n):
        h = max(1e-7, 1e-7 * abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        jac[:, i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    return jac


def _on_surface(model, y, tol=0.0) -> bool:
    return any(abs(s.guard(y)) <= tol for s in model.surfaces)


def jacobian(model, s, reduced: bool = False, mode=None) -> np.ndarray:
    """Central finite-difference Jacobian of the active smooth branch.

    Parameters
    ----------
    model : SystemModel
    s : State or array_like
        Full state, or reduced coordinates when ``reduced`` is set.
    reduced : bool
        Differentiate the reduced field (required on a sliding equilibrium).
    mode : array_like, optional
        Branch per surface; defaults to the branch active at ``s``.

    Raises
    ------
    DomainError
        If ``s`` lies exactly on a switching surface and ``reduced`` is false.
    """
    x = np.asarray(s.coords if isinstance(s, State) else s, dtype=float)
    if reduced:
        if x.size == model.dim and model.dim != len(model.reduced_names):
            x = model.reduce(x)
        y = model.lift(x)
        if mode is None:
            mode = model.initial_mode(y)
        mode = np.asarray(mode)
        return _fd_jacobian(lambda z: model.reduced_rhs(z, mode), x)
    y = model._vec(x)
    if _on_surface(model, y):
        raise DomainError("state lies on a switching surface; request the reduced Jacobian")
    if mode is None:
        mode = model.initial_mode(y)
    mode = np.asarray(mode)
    return _fd_jacobian(lambda v: model.evaluate(v, mode), y)


def _newton(model, z0, tol, max_iter):
    z = np.array(z0, dtype=float)

    def f(v):
        return model.reduced_rhs(v, model.initial_mode(model.lift(v)))

    r = f(z)
    for _ in range(max_iter):
        nr = np.linalg.norm(r)
        if nr <= tol:
            return z, nr
        if not np.all(np.isfinite(r)):
            return z, math.inf
        jac = _fd_jacobian(f, z, r)
        step = np.linalg.lstsq(jac, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            trial = z + lam * step
            rt = f(trial)
            if np.all(np.isfinite(rt)) and np.linalg.norm(rt) < nr:
                break
            lam *= 0.5
        else:
            return z, nr
        z, r = trial, rt
    return z, float(np.linalg.norm(r))


def _make_equilibrium(model, z, residual, stuck=False, family=None):
    y = model.lift(z)
    state = State(y, 0.0, model.names)
    if stuck:
        return Equilibrium(state, np.array(z), residual, math.nan, True, True, family)
    mode = model.initial_mode(y)
    jac = jacobian(model, z, reduced=True, mode=mode)
    eig = np.linalg.eigvals(jac)
    emax = float(np.max(eig.real))
    stable = None if np.linalg.cond(jac) > 1e12 else bool(emax < 0)
    return Equilibrium(state, np.array(z), residual, emax, stable, False, family, eig)


def find_equilibria(model, search: EquilibriumSearch | None = None) -> list[Equilibrium]:
    """All equilibria reachable from a deterministic multi-start set.

    Three sources are merged: Newton iteration on the reduced field from
    starts spread over the velocity axis, bracketing of the model's scalar
    steady-rotation equation (drill models) with Newton polish, and stuck
    rest states whose balance torques fit every holding interval.
    """
    search = search or EquilibriumSearch()
    lo, hi = search.velocity_range or (-model.velocity_scale, model.velocity_scale)
    names = model.reduced_names
    vel = [i for i, n in enumerate(names) if n in model.velocity_names]
    found: list[tuple[np.ndarray, float]] = []

    candidates = []
    base = np.zeros(len(names))
    for w in np.linspace(lo, hi, search.n_starts):
        z0 = base.copy()
        z0[vel] = w
        candidates.append(z0)

    if model.equilibrium_speed_residual(0.5 * (lo + hi) + 1e-3) is not None or \
            model.equilibrium_speed_residual(hi) is not None:
        grid = np.linspace(lo, hi, search.n_grid)
        vals = [model.equilibrium_speed_residual(w) for w in grid]
        for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if fa is None or fb is None or fa * fb > 0:
                continue
            if fa == 0.0:
                w = a
            else:
                w = brentq(model.equilibrium_speed_residual, a, b, xtol=1e-14, rtol=1e-15)
            candidates.insert(0, model.equilibrium_at_speed(w))

    for z0 in candidates:
        z, res = _newton(model, z0, search.tol, search.max_iter)
        if res > search.tol or _on_surface(model, model.lift(z), 1e-9):
            continue
        found.append((z, res))

    out: list[Equilibrium] = []
    for z, res in found:
        if any(np.linalg.norm(z - e.reduced) < search.dedupe_tol for e in out):
            continue
        out.append(_make_equilibrium(model, z, res))
    for z, family in model.stuck_equilibria():
        res = float(np.linalg.norm(model.reduced_rhs(z, np.zeros(len(model.surfaces), int))))
        out.append(_make_equilibrium(model, z, res, stuck=True, family=family))
    return out


# ---------------------------------------------------------------------------
# steady-state metrics
# ---------------------------------------------------------------------------

def _time_mean(t, x):
    span = t[-1] - t[0]
    if span <= 0:
        return float(x[-1])
    return float(np.trapezoid(x, t) / span)


def _peaks(t, x):
    """Maxima above mid-range, refined by a parabola through three samples."""
    mid = 0.5 * (x.max() + x.min())
    idx = np.nonzero((x[1:-1] > x[:-2]) & (x[1:-1] >= x[2:]) & (x[1:-1] > mid))[0] + 1
    times, values = [], []
    for i in idx:
        t0, t1, t2 = t[i - 1], t[i], t[i + 1]
        x0, x1, x2 = x[i - 1], x[i], x[i + 1]
        d1 = (x1 - x0) / (t1 - t0)
        d2 = (x2 - x1) / (t2 - t1)
        curv = (d2 - d1) / (t2 - t0)
        if curv < 0:
            tp = 0.5 * (t0 + t1) - d1 / (2.0 * curv)
            tp = min(max(tp, t0), t2)
            xp = x1 + d1 * (tp - t1) + curv * (tp - t0) * (tp - t1)
        else:
            tp, xp = t1, x1
        times.append(tp)
        values.append(xp)
    return np.array(times), np.array(values)


def _period(t, x, rel_tol=0.01, max_group=4):
    """``(period, span)`` from peak recurrence, or ``(None, None)``.

    ``span`` covers a whole number of periods ending at the last peak.
    """
    if np.ptp(x) == 0:
        return None, None
    times, values = _peaks(t, x)
    span = np.ptp(x)
    for k in range(1, max_group + 1):
        if times.size < 2 * k + 2:
            break
        periods = times[k:] - times[:-k]
        if periods.min() <= 0:
            continue
        spread = np.std(periods) / np.mean(periods)
        drift = np.max(np.abs(values[k:] - values[:-k])) / span
        if spread < rel_tol and drift < rel_tol:
            whole = (times.size - 1) // k * k
            return float(np.mean(periods)), (float(times[-1 - whole]), float(times[-1]))
    return None, None


def steady_state_metrics(traj: Trajectory, tail_fraction: float = 0.25, *,
                         model=None, min_tail: float = 10.0) -> AttractorReport:
    """Classify the tail window of ``traj`` by its steady-state behaviour.

    The tail is the last ``tail_fraction`` of the run, at least ``min_tail``
    seconds. Labels are tried in order: equilibrium (velocity variance below
    ``(10 abs_tol)^2``), captured rotation (rotor mean positive but below half
    the no-load speed), limit cycle (peak recurrence with period spread below
    1 %), otherwise unresolved.
    """
    if model is None:
        from .models import build_model

        model = build_model(traj.model_name)
    if not 0 < tail_fraction <= 1:
        raise ConfigError("tail_fraction must lie in (0, 1]")
    t, y = traj.t, traj.y
    duration = t[-1] - t[0]
    window = max(tail_fraction * duration, min_tail)
    vel_names = model.velocity_names or model.names
    osc = model.oscillation_name
    report = AttractorReport(UNRESOLVED, {}, 0.0, rotor=model.rotor_name, model_name=model.name)
    if duration < min_tail or t.size < 3:
        return report
    start = t[-1] - window
    sel = t >= start
    tt, yy = t[sel], y[sel]
    report.tail_window = (float(tt[0]), float(tt[-1]))

    means = {n: _time_mean(tt, yy[:, model.index(n)]) for n in vel_names}
    report.tail_mean_velocities = means
    variance = max(_time_mean(tt, (yy[:, model.index(n)] - means[n]) ** 2) for n in vel_names)
    report.amplitude = float(np.ptp(yy[:, model.index(osc)]))
    reduced = model.reduce(yy)
    report.tail_ranges = {n: float(np.ptp(reduced[:, i])) for i, n in enumerate(model.reduced_names)}
    report.tail_stick_intervals = {
        s.name: len(traj.stick_intervals(s.index, start)) for s in model.surfaces
    }

    abs_tol = traj.config.abs_tol if traj.config is not None else 1e-10
    if variance < (10.0 * abs_tol) ** 2:
        report.kind = EQUILIBRIUM
        return report
    period, span = _period(tt, yy[:, model.index(osc)])
    if span is not None:
        # average over whole periods so the means do not depend on the window phase
        whole = (tt >= span[0]) & (tt <= span[1])
        report.tail_mean_velocities = {
            n: _time_mean(tt[whole], yy[whole, model.index(n)]) for n in vel_names}
    means = report.tail_mean_velocities
    rotor = means.get(model.rotor_name) if model.rotor_name else None
    if model.no_load_speed and rotor is not None and 0 < rotor < 0.5 * model.no_load_speed:
        report.kind = CAPTURED_ROTATION
        report.period_estimate = period
    elif period is not None:
        report.kind = LIMIT_CYCLE
        report.period_estimate = period
    return report


def reports_match(a: AttractorReport, b: AttractorReport, rtol: float = MATCH_RTOL) -> bool:
    """Same kind and every shared velocity mean within ``rtol`` (relative)."""
    if a.kind != b.kind or a.kind == UNRESOLVED:
        return False
    keys = set(a.tail_mean_velocities) & set(b.tail_mean_velocities)
    for k in keys:
        x, ref = a.tail_mean_velocities[k], b.tail_mean_velocities[k]
        if abs(x - ref) > rtol * max(abs(ref), 1e-6):
            return False
    return True


# ---------------------------------------------------------------------------
# batch integration
# ---------------------------------------------------------------------------

def _outcome(task):
    model, y0, cfg, tail_fraction = task
    try:
        traj = integrate(model, y0, cfg)
    except (IntegrationError, DomainError) as exc:
        return None, str(exc)
    return steady_state_metrics(traj, tail_fraction, model=model), None


def _run_batch(model, states, cfg, tail_fraction, workers):
    tasks = [(model, y, cfg, tail_fraction) for y in states]
    if workers <= 1 or len(tasks) <= 1:
        return [_outcome(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_outcome, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# classification
# ---------------------------------------------------------------------------

def _probe_offsets(model, eq, rng, n, radius, scale):
    """Random offsets in a ball, restricted to unstable directions if any."""
    d = scale.size
    basis = None
    if eq.stable is False:
        jac = jacobian(model, eq.reduced, reduced=True)
        vals, vecs = np.linalg.eig(jac)
        cols = []
        for v, vec in zip(vals, vecs.T):
            if v.real > 0:
                cols.append(vec.real)
                if abs(v.imag) > 0:
                    cols.append(vec.imag)
        # express directions in normalised coordinates before orthonormalising
        basis = np.linalg.qr(np.array(cols).T / scale[:, None])[0]
    k = d if basis is None else basis.shape[1]
    out = []
    for _ in range(n):
        g = rng.standard_normal(k)
        g *= radius * rng.random() ** (1.0 / k) / np.linalg.norm(g)
        unit = g if basis is None else basis @ g
        out.append(unit * scale)
    return out


def classify_attractor(model, report: AttractorReport, equilibria, radius: float = 0.1,
                       n_probes: int = 50, seed: int = 42, *, cfg: IntegrationConfig | None = None,
                       tail_fraction: float = 0.25, workers: int = 1) -> AttractorReport:
    """Label ``report`` hidden or self-excited by probing near equilibria.

    Probes start at uniform random points of a ball of ``radius`` around each
    unstable equilibrium, restricted to its unstable eigen-directions; if no
    equilibrium is unstable, full balls around every equilibrium are used.
    Each reduced coordinate is scaled by the attractor's tail range (1 where
    that range is zero). A probe converges if its own steady state matches
    the attractor (:func:`reports_match`).

    Returns a copy of ``report`` with ``classification`` and ``probes`` set.
    Equilibria and unresolved reports are ``not_applicable``.
    """
    out = replace(report, probes=[])
    if report.kind in (EQUILIBRIUM, UNRESOLVED):
        out.classification = NOT_APPLICABLE
        return out
    equilibria = list(equilibria)
    if not equilibria:
        out.classification = HIDDEN
        return out
    cfg = cfg or IntegrationConfig(t_end=model.default_t_end)
    scale = np.array([report.tail_ranges.get(n, 0.0) or 1.0 for n in model.reduced_names])
    unstable = [i for i, e in enumerate(equilibria) if e.stable is False]
    targets = unstable or list(range(len(equilibria)))

    children = np.random.SeedSequence(seed).spawn(len(equilibria))
    starts, offsets, owners = [], [], []
    for i in targets:
        eq = equilibria[i]
        rng = np.random.default_rng(children[i])
        for off in _probe_offsets(model, eq, rng, n_probes, radius, scale):
            starts.append(model.lift(eq.reduced + off))
            offsets.append(off)
            owners.append(i)

    results = _run_batch(model, starts, cfg, tail_fraction, workers)
    probes = []
    failed = 0
    for i, off, (rep, err) in zip(owners, offsets, results):
        if rep is None:
            failed += 1
            logger.warning("probe near equilibrium %d failed: %s", i, err)
            probes.append(Probe(i, tuple(map(float, off)), None))
            continue
        probes.append(Probe(i, tuple(map(float, off)), reports_match(rep, report),
                            rep.kind, rep.tail_mean_velocities))
    if failed:
        logger.warning("%d of %d probes unresolved and excluded", failed, len(probes))
    out.probes = probes
    out.classification = SELF_EXCITED if any(p.converged for p in probes) else HIDDEN
    return out


def sommerfeld_ratio(captured: AttractorReport, normal: AttractorReport) -> float:
    """Captured tail-mean rotor speed over the normal-operation one."""
    den = normal.rotor_mean
    if not (math.isfinite(den) and den > 0):
        raise DomainError(f"normal-operation rotor mean must be positive, got {den}")
    return captured.rotor_mean / den


# ---------------------------------------------------------------------------
# basin scan
# ---------------------------------------------------------------------------

def basin_scan(model, grid: BasinGrid, cfg: IntegrationConfig | None = None, workers: int = 1,
               *, known=(), tail_fraction: float = 0.25) -> BasinMap:
    """Label every grid cell by the attractor its trajectory settles on.

    Cells are integrated independently (optionally in a process pool) and
    labelled afterwards in row-major order against ``known`` attractors,
    appending new ones, so the map does not depend on ``workers``.
    """
    cfg = cfg or IntegrationConfig(t_end=model.default_t_end)
    for name in [n for a in grid.axes for n in a.names] + list(grid.fixed):
        model.index(name)
    base = np.zeros(model.dim)
    for name, value in grid.fixed.items():
        base[model.index(name)] = value
    states = []
    for cell in np.ndindex(*grid.shape):
        y = base.copy()
        for axis, i in zip(grid.axes, cell):
            for name in axis.names:
                y[model.index(name)] = axis.values[i]
        states.append(y)

    results = _run_batch(model, states, cfg, tail_fraction, workers)
    attractors = list(known)
    labels = np.full(len(states), BasinMap.UNRESOLVED_LABEL, dtype=np.int64)
    for c, (rep, err) in enumerate(results):
        if rep is None:
            logger.warning("basin cell %d failed: %s", c, err)
            continue
        if rep.kind == UNRESOLVED:
            continue
        for k, att in enumerate(attractors):
            if reports_match(rep, att):
                labels[c] = k
                break
        else:
            attractors.append(rep)
            labels[c] = len(attractors) - 1
    return BasinMap(grid.axes, labels.reshape(grid.shape), attractors, dict(grid.fixed))


__all__ = [
    "AttractorReport", "BasinGrid", "BasinMap", "Equilibrium", "EquilibriumSearch",
    "GridAxis", "Probe", "basin_scan", "classify_attractor", "find_equilibria",
    "jacobian", "reports_match", "sommerfeld_ratio", "steady_state_metrics",
]
