"""Trajectory CSV and summary JSON export, and the scenario runner.

CSV layout: a header ``t,<coordinates...>,event,surface`` followed by one row
per sample. Each event adds a row after the sample at its time, repeating
that sample's values and filling ``event`` with the event kind and
``surface`` with the surface index. Numbers use 17 significant digits, so a
read-back reproduces every sample exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
import logging
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import AttractorReport
from .config import ScenarioSpec, get_scenario, provenance
from .core import ContractError
from .integrator import EVENT_KINDS, STICK_ONSET, STICK_RELEASE, Event, Trajectory, integrate

logger = logging.getLogger(__name__)

SUMMARY_VERSION = 1


class ArtifactIOError(OSError):
    """An output or input file could not be written or read."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)


def _num(x) -> str:
    return f"{float(x):.17g}"


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    return path


# ---------------------------------------------------------------------------
# trajectory CSV
# ---------------------------------------------------------------------------

def trajectory_csv(traj: Trajectory) -> str:
    if len(traj) == 0:
        raise ContractError("cannot export an empty trajectory")
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *traj.names, "event", "surface"])
    events = sorted(traj.events, key=lambda e: e.t)
    k = 0
    for i in range(len(traj)):
        row = [_num(traj.t[i]), *(_num(v) for v in traj.y[i])]
        w.writerow(row + ["", ""])
        upper = traj.t[i + 1] if i + 1 < len(traj) else math.inf
        while k < len(events) and events[k].t < upper:
            w.writerow(row + [events[k].kind, str(events[k].surface)])
            k += 1
    return buf.getvalue()


def export_trajectory(traj: Trajectory, path) -> Path:
    return atomic_write(path, trajectory_csv(traj))


def read_trajectory_csv(path) -> Trajectory:
    """Inverse of :func:`export_trajectory`.

    Event times are the sample times they follow; stick intervals are
    rebuilt from onset/release pairs.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ArtifactIOError(path, exc.strerror or str(exc)) from exc
    header = rows[0]
    if header[0] != "t" or header[-2:] != ["event", "surface"]:
        raise ContractError(f"{path}: not a trajectory CSV")
    names = tuple(header[1:-2])
    ts, ys, events = [], [], []
    for row in rows[1:]:
        if row[-2]:
            if row[-2] not in EVENT_KINDS:
                raise ContractError(f"{path}: unknown event kind {row[-2]!r}")
            events.append(Event(float(row[0]), row[-2], int(row[-1])))
        else:
            ts.append(float(row[0]))
            ys.append([float(v) for v in row[1:-2]])
    t = np.array(ts)
    history, open_since = [], {}
    for e in events:
        if e.kind == STICK_ONSET:
            open_since[e.surface] = e.t
        elif e.kind == STICK_RELEASE:
            history.append((open_since.pop(e.surface, float(t[0])), e.t, e.surface))
    history.extend((a, float(t[-1]), j) for j, a in open_since.items())
    history.sort(key=lambda r: (r[0], r[2]))
    return Trajectory(names=names, t=t, y=np.array(ys).reshape(len(ts), len(names)),
                      events=events, mode_history=history)


# ---------------------------------------------------------------------------
# summary JSON
# ---------------------------------------------------------------------------

@dataclass
class RunSummary:
    """Result of one scenario run; serialises field-for-field to JSON.

    ``params`` maps every resolved parameter to ``{"value", "provenance"}``.
    """

    scenario: str
    model: str
    reports: dict[str, AttractorReport]
    equilibria: list[dict]
    params: dict[str, dict]
    initial: dict[str, float]
    integration: dict[str, float]
    sommerfeld_ratio: float | None = None
    basin: dict | None = None
    stats: dict = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    wall_clock_s: float = 0.0
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "version": SUMMARY_VERSION,
            "scenario": self.scenario,
            "model": self.model,
            "reports": {k: r.to_dict() for k, r in self.reports.items()},
            "equilibria": self.equilibria,
            "params": self.params,
            "initial": self.initial,
            "integration": self.integration,
            "sommerfeld_ratio": self.sommerfeld_ratio,
            "basin": self.basin,
            "stats": self.stats,
            "artifacts": self.artifacts,
            "wall_clock_s": self.wall_clock_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        if d.get("version") != SUMMARY_VERSION:
            raise ContractError(f"unsupported summary version {d.get('version')!r}")
        return cls(
            scenario=d["scenario"], model=d["model"],
            reports={k: AttractorReport.from_dict(r) for k, r in d["reports"].items()},
            equilibria=d["equilibria"], params=d["params"], initial=d["initial"],
            integration=d["integration"], sommerfeld_ratio=d["sommerfeld_ratio"],
            basin=d["basin"], stats=d["stats"], artifacts=d["artifacts"],
            wall_clock_s=d["wall_clock_s"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def load(cls, path) -> "RunSummary":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise ArtifactIOError(path, exc.strerror or str(exc)) from exc


def export_summary(summary: RunSummary, path) -> Path:
    return atomic_write(path, summary.to_json())


# ---------------------------------------------------------------------------
# plot script
# ---------------------------------------------------------------------------

_PLOT_TEMPLATE = '''"""Plot {csv_name}: velocity time series and a phase portrait.

Run with any Python that has matplotlib installed.
"""

import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

path = Path(__file__).with_name({csv_name!r})
with open(path, newline="") as fh:
    rows = [r for r in csv.DictReader(fh) if not r["event"]]
t = [float(r["t"]) for r in rows]
velocities = {velocities!r}
phase = {phase!r}

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))
for name in velocities:
    ax1.plot(t, [float(r[name]) for r in rows], lw=0.8, label=name)
ax1.set_xlabel("t [s]")
ax1.set_ylabel("angular velocity [rad/s]")
ax1.legend()
ax2.plot([float(r[phase[0]]) for r in rows], [float(r[phase[1]]) for r in rows], lw=0.5)
ax2.set_xlabel(phase[0])
ax2.set_ylabel(phase[1])
fig.suptitle({title!r})
fig.tight_layout()
if len(sys.argv) > 1:
    fig.savefig(sys.argv[1], dpi=150)
else:
    plt.show()
'''


_PHASE = {
    "tora": ("x", "x_dot"),
    "drill_dc": ("alpha", "omega_l"),
    "drill_induction": ("omega_u", "omega_l"),
    "oscillator": ("x", "v"),
}


def plot_script(csv_name: str, model, title: str) -> str:
    vel = list(model.velocity_names) or list(model.names)
    phase = list(_PHASE.get(model.name, model.names[:2]))
    return _PLOT_TEMPLATE.format(csv_name=csv_name, velocities=vel, phase=phase, title=title)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

def run_scenario(spec: ScenarioSpec | str, out_dir=None, *, workers: int | None = None,
                 write: bool = True) -> RunSummary:
    """Integrate ``spec``, run its analyses and write the artifacts.

    Files written to ``out_dir`` (if ``write``): ``<id>.csv``,
    ``<id>.summary.json`` and ``<id>_plot.py``.
    """
    if isinstance(spec, str):
        spec = get_scenario(spec)
    workers = spec.workers if workers is None else workers
    started = time.perf_counter()
    model = spec.build()
    cfg = spec.integration
    traj = integrate(model, np.array(spec.initial), cfg)
    logger.info("%s: %d samples, %d events", spec.id, len(traj), len(traj.events))

    reports: dict[str, AttractorReport] = {}
    equilibria = []
    report = analysis.steady_state_metrics(traj, spec.tail_fraction, model=model)
    reports["main"] = report
    eqs = None
    if {"equilibria", "classify"} & set(spec.analyses):
        eqs = analysis.find_equilibria(model)
        equilibria = [e.to_dict() for e in eqs]
    if "classify" in spec.analyses:
        reports["main"] = analysis.classify_attractor(
            model, report, eqs, spec.radius, spec.n_probes, spec.seed,
            cfg=cfg, tail_fraction=spec.tail_fraction, workers=workers)
    ratio = None
    if "sommerfeld" in spec.analyses:
        pair = get_scenario(spec.sommerfeld_pair)
        pm = pair.build()
        ptraj = integrate(pm, np.array(pair.initial), pair.integration)
        reports["pair"] = analysis.steady_state_metrics(ptraj, pair.tail_fraction, model=pm)
        ratio = analysis.sommerfeld_ratio(reports["main"], reports["pair"])
    basin = None
    if "basin" in spec.analyses:
        basin = analysis.basin_scan(model, spec.basin, cfg, workers,
                                    tail_fraction=spec.tail_fraction).to_dict()

    summary = RunSummary(
        scenario=spec.id, model=spec.model, reports=reports, equilibria=equilibria,
        params=provenance(spec), initial=spec.initial_dict(),
        integration={k: float(v) for k, v in vars(cfg).items()},
        sommerfeld_ratio=ratio, basin=basin,
        stats={"samples": len(traj), "events": len(traj.events),
               "stick_intervals": len(traj.mode_history),
               **{k: v for k, v in traj.stats.items() if k != "final_mode"}},
    )
    if write:
        out = Path(out_dir or ".")
        names = {"trajectory": f"{spec.id}.csv", "summary": f"{spec.id}.summary.json",
                 "plot": f"{spec.id}_plot.py"}
        summary.artifacts = dict(names)
        export_trajectory(traj, out / names["trajectory"])
        atomic_write(out / names["plot"],
                     plot_script(names["trajectory"], model, spec.description or spec.id))
    summary.wall_clock_s = round(time.perf_counter() - started, 3)
    if write:
        export_summary(summary, out / names["summary"])
    summary.trajectory = traj
    return summary


__all__ = [
    "ArtifactIOError", "RunSummary", "atomic_write", "export_summary", "export_trajectory",
    "plot_script", "read_trajectory_csv", "run_scenario", "trajectory_csv",
]
