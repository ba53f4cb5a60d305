"""Scenario specifications, the built-in scenarios and the config-file parser.

Config files are INI-style with five sections::

    [model]
    scenario = drill-dc-hidden   ; optional built-in to start from
    name = drill_dc              ; tora | drill_dc | drill_induction | oscillator

    [params]
    v = 4.0                      ; any parameter of the model (friction keys flat)

    [initial]
    omega_u = 6.1                ; unset coordinates default to 0

    [integration]
    t_end = 400
    rel_tol = 1e-8

    [analysis]
    analyses = metrics, equilibria, classify
    radius = 0.1
    n_probes = 50
    seed = 42
    tail_fraction = 0.25
    sommerfeld_pair = tora-normal
    basin_axes = omega_u:0:10:20; omega_l:0:10:20
    basin_fixed = alpha:0

Angles are in rad, angular velocities in rad/s, torques in N m, time in s.
"""

from __future__ import annotations

import configparser
import difflib
import re
from dataclasses import dataclass, fields, is_dataclass, replace

from .analysis import BasinGrid, GridAxis
from .core import ConfigError
from .integrator import IntegrationConfig
from .models import build_model, default_params, with_params

PAPER = "paper"
CALIBRATED = "default-calibrated"
USER = "user"

# defaults that are not stated verbatim for the model they belong to
_CALIBRATED_KEYS = {
    "drill_dc": {"v", "T_0", "b_l"},
    "oscillator": None,  # benchmark model: every default is an artifact choice
}

ANALYSES = ("metrics", "equilibria", "classify", "sommerfeld", "basin")

_SECTIONS = ("model", "params", "initial", "integration", "analysis")
_MODEL_KEYS = {"scenario": "built-in scenario id", "name": "model name"}
_ANALYSIS_KEYS = {
    "analyses": "comma-separated analyses to run",
    "radius": "probe neighbourhood radius",
    "n_probes": "number of probes per equilibrium",
    "seed": "random seed for probes",
    "tail_fraction": "tail window fraction",
    "sommerfeld_pair": "scenario giving the normal-operation rotor speed",
    "basin_axes": "basin grid axes name:lo:hi:n separated by ;",
    "basin_fixed": "fixed basin coordinates name:value separated by ;",
    "workers": "worker processes",
}


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to reproduce one run."""

    id: str
    model: str
    params: object
    initial: tuple[float, ...]
    integration: IntegrationConfig
    analyses: tuple[str, ...] = ("metrics", "equilibria", "classify")
    user_params: frozenset = frozenset()
    radius: float = 0.1
    n_probes: int = 50
    seed: int = 42
    tail_fraction: float = 0.25
    sommerfeld_pair: str | None = None
    basin: BasinGrid | None = None
    workers: int = 1
    description: str = ""

    def __post_init__(self):
        model = build_model(self.model, self.params)
        if len(self.initial) != model.dim:
            raise ConfigError(
                f"initial: {self.model} needs {model.dim} coordinates, got {len(self.initial)}")
        bad = [a for a in self.analyses if a not in ANALYSES]
        if bad:
            raise ConfigError(f"analysis.analyses: unknown {bad}; choose from {', '.join(ANALYSES)}")
        if "basin" in self.analyses and self.basin is None:
            raise ConfigError("analysis.basin_axes is required for the basin analysis")
        if self.basin is not None:
            for name in [n for a in self.basin.axes for n in a.names] + list(self.basin.fixed):
                model.index(name)
        if "sommerfeld" in self.analyses and self.sommerfeld_pair is None:
            raise ConfigError("analysis.sommerfeld_pair is required for the sommerfeld analysis")
        if not (self.radius > 0 and self.n_probes >= 1 and 0 < self.tail_fraction <= 1
                and self.workers >= 1):
            raise ConfigError("analysis: radius > 0, n_probes >= 1, 0 < tail_fraction <= 1, workers >= 1")

    def build(self):
        return build_model(self.model, self.params)

    def initial_dict(self) -> dict[str, float]:
        return dict(zip(self.build().names, self.initial))


def flat_params(params) -> dict[str, float]:
    """Parameter record flattened to ``name -> value`` (friction records inlined)."""
    out = {}
    for f in fields(params):
        value = getattr(params, f.name)
        if is_dataclass(value):
            out.update(flat_params(value))
        else:
            out[f.name] = float(value)
    return out


def _descriptions(params) -> dict[str, str]:
    out = {}
    for f in fields(params):
        value = getattr(params, f.name)
        if is_dataclass(value):
            out.update(_descriptions(value))
        else:
            out[f.name] = f.metadata.get("desc", "")
    return out


def provenance(spec: ScenarioSpec) -> dict[str, dict]:
    """Resolved parameters, each with its provenance flag."""
    calibrated = _CALIBRATED_KEYS.get(spec.model, set())
    out = {}
    for name, value in flat_params(spec.params).items():
        if name in spec.user_params:
            flag = USER
        elif calibrated is None or name in calibrated:
            flag = CALIBRATED
        else:
            flag = PAPER
        out[name] = {"value": value, "provenance": flag}
    return out


# ---------------------------------------------------------------------------
# built-in scenarios
# ---------------------------------------------------------------------------

def _builtin(id, model, initial, t_end, description, **kw):
    names = build_model(model).names
    y0 = [float(initial.get(n, 0.0)) for n in names]
    return ScenarioSpec(id=id, model=model, params=default_params(model), initial=tuple(y0),
                        integration=IntegrationConfig(t_end=t_end), description=description, **kw)


def _scenarios():
    dc_grid = BasinGrid((GridAxis("omega_u", 0.0, 10.0, 20), GridAxis("omega_l", 0.0, 10.0, 20)),
                        {"alpha": 0.0})
    return {
        s.id: s for s in (
            _builtin("tora-capture", "tora", {}, 300.0,
                     "TORA started at rest: rotor captured near the cart resonance",
                     analyses=("metrics", "equilibria", "classify", "sommerfeld"),
                     sommerfeld_pair="tora-normal"),
            _builtin("tora-normal", "tora", {"theta_dot": 40.0}, 300.0,
                     "TORA started at theta_dot = 40: rotor passes the resonance"),
            _builtin("drill-dc-hidden", "drill_dc", {}, 400.0,
                     "DC drill started at rest: stick-slip oscillations",
                     basin=dc_grid),
            _builtin("drill-dc-normal", "drill_dc", {"omega_u": 6.1, "omega_l": 6.1}, 400.0,
                     "DC drill started co-rotating at 6.1 rad/s: normal operation",
                     basin=dc_grid),
            _builtin("drill-ind-a", "drill_induction", {}, 400.0,
                     "induction drill co-rotating with the field: normal operation"),
            # speeds are conventionally quoted as -d(theta)/dt in the field frame: 8 there is -8 here
            _builtin("drill-ind-b", "drill_induction", {"omega_u": -8.0, "omega_l": -8.0}, 400.0,
                     "induction drill started at rest: stick-slip oscillations"),
        )
    }


SCENARIOS = _scenarios()
ALIASES = {"drill-ind-normal": "drill-ind-a", "drill-ind-hidden": "drill-ind-b"}


def get_scenario(name: str) -> ScenarioSpec:
    key = ALIASES.get(name, name)
    if key not in SCENARIOS:
        hint = difflib.get_close_matches(name, list(SCENARIOS) + list(ALIASES), n=1)
        extra = f"; did you mean {hint[0]!r}?" if hint else ""
        raise ConfigError(f"unknown scenario {name!r}{extra}")
    return SCENARIOS[key]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines = {}
    section = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
        if section is not None:
            lines.setdefault((section, key), no)
    return lines


def _suggest(key: str, described: dict[str, str]) -> str:
    """Closest known key, by name or by a word of its description."""
    names = list(described)
    hit = difflib.get_close_matches(key, names, n=1, cutoff=0.6)
    if not hit:
        lowered = key.lower()
        best, score = None, 0.0
        for name, desc in described.items():
            for word in re.findall(r"[a-z]+", desc.lower()):
                r = difflib.SequenceMatcher(None, lowered, word).ratio()
                if r > score:
                    best, score = name, r
        if score >= 0.75:
            hit = [best]
    if not hit:
        return ""
    desc = described.get(hit[0], "")
    return f"; did you mean {hit[0]!r}" + (f" ({desc})" if desc else "") + "?"


def _float(section, key, raw, lines):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key} (line {lines.get((section, key), '?')}): "
            f"expected a number, got {raw!r}") from None


def _parse_axes(raw, where):
    axes = []
    for chunk in filter(None, (c.strip() for c in raw.split(";"))):
        parts = chunk.split(":")
        if len(parts) != 4:
            raise ConfigError(f"{where}: axis {chunk!r} is not name[,name]:lo:hi:n")
        try:
            axes.append(GridAxis(tuple(n.strip() for n in parts[0].split(",")),
                                 float(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError:
            raise ConfigError(f"{where}: axis {chunk!r} is not name[,name]:lo:hi:n") from None
    return tuple(axes)


def _parse_fixed(raw, where):
    out = {}
    for chunk in filter(None, (c.strip() for c in raw.split(";"))):
        name, _, value = chunk.partition(":")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"{where}: fixed value {chunk!r} is not name:value") from None
    return out


def parse_config(text: str) -> ScenarioSpec:
    """Parse a config file into a :class:`ScenarioSpec`.

    Raises
    ------
    ConfigError
        On syntax errors (with line number), unknown sections or keys (with
        a suggestion), bad values and dimension mismatches.
    """
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"line {exc.lineno}: expected a [section] header") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.ParsingError as exc:
        no = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"line {no}: cannot parse {exc.errors[0][1] if exc.errors else ''}") from None
    lines = _key_lines(text)

    def where(section, key):
        return f"{section}.{key} (line {lines.get((section, key), '?')})"

    def check_keys(section, known: dict[str, str]):
        if not cp.has_section(section):
            return
        for key in cp[section]:
            if key not in known:
                raise ConfigError(
                    f"unknown key {where(section, key)} in [{section}]{_suggest(key, known)}")

    for section in cp.sections():
        if section not in _SECTIONS:
            hint = difflib.get_close_matches(section, _SECTIONS, n=1)
            extra = f"; did you mean [{hint[0]}]?" if hint else ""
            raise ConfigError(f"unknown section [{section}]{extra}")

    check_keys("model", _MODEL_KEYS)
    model_sec = cp["model"] if cp.has_section("model") else {}
    base = get_scenario(model_sec["scenario"]) if "scenario" in model_sec else None
    model_name = model_sec.get("name", base.model if base else None)
    if model_name is None:
        raise ConfigError("model: give a built-in 'scenario' or a model 'name'")
    if base is not None and model_name != base.model:
        raise ConfigError(
            f"{where('model', 'name')}: {model_name!r} conflicts with scenario model {base.model!r}")
    params = base.params if base else default_params(model_name)
    model = build_model(model_name, params)

    described = _descriptions(params)
    check_keys("params", described)
    user = set(base.user_params) if base else set()
    overrides = {}
    if cp.has_section("params"):
        for key, raw in cp["params"].items():
            overrides[key] = _float("params", key, raw, lines)
            user.add(key)
    try:
        params = with_params(params, **overrides)
        model = build_model(model_name, params)
    except ConfigError as exc:
        raise ConfigError(f"params: {exc}") from None

    check_keys("initial", {n: "initial coordinate" for n in model.names})
    initial = list(base.initial) if base else [0.0] * model.dim
    if cp.has_section("initial"):
        for key, raw in cp["initial"].items():
            initial[model.index(key)] = _float("initial", key, raw, lines)

    cfg_desc = {f.name: "integration setting" for f in fields(IntegrationConfig)}
    check_keys("integration", cfg_desc)
    cfg = base.integration if base else IntegrationConfig(t_end=model.default_t_end)
    if cp.has_section("integration"):
        vals = {k: _float("integration", k, v, lines) for k, v in cp["integration"].items()}
        try:
            cfg = replace(cfg, **vals)
        except ValueError as exc:
            raise ConfigError(f"integration: {exc}") from None

    check_keys("analysis", _ANALYSIS_KEYS)
    kw = {}
    if base:
        kw = {f.name: getattr(base, f.name) for f in fields(ScenarioSpec)
              if f.name in ("analyses", "radius", "n_probes", "seed", "tail_fraction",
                            "sommerfeld_pair", "basin", "workers", "description")}
    if cp.has_section("analysis"):
        sec = cp["analysis"]
        if "analyses" in sec:
            kw["analyses"] = tuple(a.strip() for a in sec["analyses"].split(",") if a.strip())
        for key, conv in (("radius", float), ("tail_fraction", float),
                          ("n_probes", int), ("seed", int), ("workers", int)):
            if key in sec:
                try:
                    kw[key] = conv(sec[key])
                except ValueError:
                    raise ConfigError(f"{where('analysis', key)}: bad value {sec[key]!r}") from None
        if "sommerfeld_pair" in sec:
            get_scenario(sec["sommerfeld_pair"])
            kw["sommerfeld_pair"] = sec["sommerfeld_pair"]
        if "basin_axes" in sec:
            fixed = _parse_fixed(sec.get("basin_fixed", ""), where("analysis", "basin_fixed"))
            kw["basin"] = BasinGrid(_parse_axes(sec["basin_axes"], where("analysis", "basin_axes")),
                                    fixed)
        elif "basin_fixed" in sec:
            raise ConfigError(f"{where('analysis', 'basin_fixed')}: needs basin_axes")

    if base and not cp.has_section("params") and not cp.has_section("initial") \
            and not cp.has_section("integration") and not cp.has_section("analysis"):
        return base
    sid = base.id if base else f"custom-{model_name}"
    return ScenarioSpec(id=sid, model=model_name, params=params, initial=tuple(initial),
                        integration=cfg, user_params=frozenset(user), **kw)


__all__ = [
    "ALIASES", "ANALYSES", "SCENARIOS", "ScenarioSpec", "flat_params", "get_scenario",
    "parse_config", "provenance",
]
