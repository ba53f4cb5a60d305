import json
import os
import textwrap

import numpy as np
import pytest

from hidden_attractors import cli
from hidden_attractors.config import SCENARIOS, get_scenario, parse_config, provenance
from hidden_attractors.core import ConfigError
from hidden_attractors.integrator import Event, IntegrationConfig, IntegrationError, Trajectory
from hidden_attractors.io import (
    ArtifactIOError,
    RunSummary,
    atomic_write,
    export_summary,
    export_trajectory,
    read_trajectory_csv,
    run_scenario,
    trajectory_csv,
)


def cfg(text):
    return parse_config(textwrap.dedent(text))


# -- config parsing ----------------------------------------------------------------

def test_minimal_config_equals_builtin():
    assert cfg("[model]\nscenario = drill-dc-hidden\n") == get_scenario("drill-dc-hidden")


def test_alias_resolves_to_builtin():
    assert get_scenario("drill-ind-hidden") is SCENARIOS["drill-ind-b"]


def test_user_override_is_flagged():
    spec = cfg("""
        [model]
        scenario = drill-dc-hidden
        [params]
        v = 4.0
        """)
    echo = provenance(spec)
    assert echo["v"] == {"value": 4.0, "provenance": "user"}
    assert echo["T_0"]["provenance"] == "default-calibrated"
    assert echo["k_theta"]["provenance"] == "paper"


def test_builtin_provenance_flags():
    echo = provenance(get_scenario("drill-dc-normal"))
    assert {k for k, v in echo.items() if v["provenance"] == "default-calibrated"} == {"v", "T_0", "b_l"}
    for sid in SCENARIOS:
        flags = {v["provenance"] for v in provenance(SCENARIOS[sid]).values()}
        assert flags <= {"paper", "default-calibrated"}


def test_misspelt_stiffness_suggests_stiffness_key():
    with pytest.raises(ConfigError, match=r"line 4.*did you mean 'k_theta' \(torsional stiffness\)"):
        cfg("""
            [model]
            name = drill_dc
            [params]
            stiffnes = 1.0
            """.lstrip("\n"))


def test_unknown_section_and_key_are_errors():
    with pytest.raises(ConfigError, match=r"did you mean \[params\]"):
        cfg("[parms]\nv = 1\n")
    with pytest.raises(ConfigError, match=r"integration.tend \(line 2\).*t_end"):
        cfg("[integration]\ntend = 10\n[model]\nname = tora\n")


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError, match="line 1"):
        cfg("v = 4.0\n")
    with pytest.raises(ConfigError, match="line 3"):
        cfg("[model]\nname = tora\nname = drill_dc\n")


def test_bad_number_reports_line():
    with pytest.raises(ConfigError, match=r"params.v \(line 4\): expected a number"):
        cfg("[model]\nname = drill_dc\n[params]\nv = fast\n")


def test_dimension_and_coordinate_mismatch():
    with pytest.raises(ConfigError, match="unknown key initial.i_a"):
        cfg("[model]\nname = drill_dc\n[initial]\ni_a = 1\n")
    with pytest.raises(ConfigError, match="needs 4 coordinates"):
        SCENARIOS["drill-dc-hidden"].__class__(
            id="x", model="drill_dc", params=SCENARIOS["drill-dc-hidden"].params,
            initial=(0.0,) * 7, integration=IntegrationConfig())


def test_full_config_round_trip():
    spec = cfg("""
        [model]
        name = drill_dc
        [initial]
        omega_u = 2.5
        [integration]
        t_end = 50
        [analysis]
        analyses = metrics, basin
        basin_axes = omega_u,omega_l:0:10:5
        basin_fixed = alpha:0
        seed = 7
        """)
    assert spec.initial == (0.0, 2.5, 0.0, 0.0)
    assert spec.integration.t_end == 50.0 and spec.seed == 7
    assert spec.basin.axes[0].names == ("omega_u", "omega_l") and spec.basin.fixed == {"alpha": 0.0}


def test_config_rejects_bad_basin_coordinate():
    with pytest.raises(ConfigError):
        cfg("[model]\nname = tora\n[analysis]\nbasin_axes = omega:0:1:3\n")


# -- trajectory CSV ------------------------------------------------------------------

def tiny_trajectory():
    return Trajectory(("x", "v"), np.array([0.0, 0.1]), np.array([[1.0, 0.0], [0.995, -0.1]]))


def test_two_sample_csv_has_three_lines():
    text = trajectory_csv(tiny_trajectory())
    assert text.endswith("\n")
    lines = text.splitlines()
    assert lines == ["t,x,v,event,surface", "0,1,0,,", "0.10000000000000001,0.995,-0.10000000000000001,,"]


def test_empty_trajectory_is_rejected():
    from hidden_attractors.core import ContractError
    with pytest.raises(ContractError):
        trajectory_csv(Trajectory(("x",), np.empty(0), np.empty((0, 1))))


def test_csv_round_trip_is_exact(tmp_path, scenario_runs):
    traj = scenario_runs["drill-dc-hidden"].trajectory
    first = export_trajectory(traj, tmp_path / "a.csv")
    back = read_trajectory_csv(first)
    assert np.array_equal(back.t, traj.t) and np.array_equal(back.y, traj.y)
    assert back.events == traj.events
    assert back.mode_history == traj.mode_history
    second = export_trajectory(back, tmp_path / "b.csv")
    assert first.read_bytes() == second.read_bytes()


def test_csv_event_rows_follow_their_sample(tmp_path):
    traj = Trajectory(("x", "v"), np.array([0.0, 1.0, 2.0]), np.zeros((3, 2)),
                      events=[Event(1.0, "stick_onset", 0)])
    rows = trajectory_csv(traj).splitlines()
    assert rows[3] == "1,0,0,stick_onset,0" and rows[2] == "1,0,0,,"


# -- summary JSON -----------------------------------------------------------------------

def test_summary_round_trip_is_exact(tmp_path, scenario_runs):
    for sid in ("tora-capture", "drill-dc-hidden"):
        summary = scenario_runs[sid]
        path = export_summary(summary, tmp_path / f"{sid}.json")
        back = RunSummary.load(path)
        assert back == summary
        again = export_summary(back, tmp_path / f"{sid}.2.json")
        assert path.read_bytes() == again.read_bytes()
        assert path.read_text().endswith("\n")


def test_summary_echo_is_complete(scenario_runs):
    for summary in scenario_runs.values():
        d = json.loads(summary.to_json())
        assert list(d)[:3] == ["version", "scenario", "model"]
        assert all(v["provenance"] in ("paper", "default-calibrated", "user")
                   for v in d["params"].values())


# -- runner ----------------------------------------------------------------------------------

def test_builtin_scenarios_end_to_end(scenario_runs):
    kinds = {sid: s.reports["main"].kind for sid, s in scenario_runs.items()}
    assert kinds == {
        "tora-capture": "captured_rotation", "tora-normal": "limit_cycle",
        "drill-dc-hidden": "limit_cycle", "drill-dc-normal": "equilibrium",
        "drill-ind-a": "equilibrium", "drill-ind-b": "limit_cycle",
    }
    assert scenario_runs["tora-capture"].reports["main"].classification == "hidden"
    assert scenario_runs["drill-dc-hidden"].reports["main"].classification == "hidden"


def test_run_writes_artifacts(tmp_path):
    spec = parse_config("[model]\nscenario = drill-dc-normal\n[integration]\nt_end = 20\n"
                        "[analysis]\nanalyses = metrics\n")
    summary = run_scenario(spec, tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["drill-dc-normal.csv", "drill-dc-normal.summary.json", "drill-dc-normal_plot.py"]
    assert RunSummary.load(tmp_path / "drill-dc-normal.summary.json") == summary
    compile((tmp_path / "drill-dc-normal_plot.py").read_text(), "plot", "exec")


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_directory_raises_with_path(tmp_path):
    locked = tmp_path / "locked"
    locked.mkdir(mode=0o500)
    with pytest.raises(ArtifactIOError, match="locked"):
        atomic_write(locked / "x.txt", "hi\n")


def test_output_path_blocked_by_file_raises_with_path(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(ArtifactIOError, match="blocker"):
        atomic_write(blocker / "x.txt", "hi\n")
    assert not list(tmp_path.glob(".*.tmp"))


# -- CLI ---------------------------------------------------------------------------------------

def test_cli_list(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    for sid in SCENARIOS:
        assert sid in out


def test_cli_run_success(tmp_path, capsys):
    code = cli.main(["run", "drill-dc-normal", "--out-dir", str(tmp_path), "--t-end", "100"])
    assert code == 0
    assert (tmp_path / "drill-dc-normal.summary.json").exists()
    assert "omega_u=6.1" in capsys.readouterr().out


def test_cli_config_errors_exit_1(tmp_path):
    assert cli.main(["run", "no-such-scenario", "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["run", "drill-dc-normal", "--t-end", "-1", "--out-dir", str(tmp_path)]) == 1
    assert cli.main(["scan", "tora-normal", "--out-dir", str(tmp_path)]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[params]\nstiffnes = 1\n")
    assert cli.main(["run", "--config", str(bad), "--out-dir", str(tmp_path)]) == 1


def test_cli_runtime_failure_exits_2(tmp_path, monkeypatch):
    def failing(*a, **k):
        raise IntegrationError("step size underflow")
    monkeypatch.setattr(cli, "run_scenario", failing)
    assert cli.main(["run", "drill-dc-normal", "--out-dir", str(tmp_path)]) == 2


def test_cli_io_failure_exits_3(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main(["run", "drill-dc-normal", "--t-end", "5", "--out-dir", str(blocker)]) == 3
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 3


def test_cli_scan_writes_basin(tmp_path):
    code = cli.main(["scan", "drill-dc-hidden", "--resolution", "2", "--t-end", "100",
                     "--out-dir", str(tmp_path)])
    assert code == 0
    basin = json.loads((tmp_path / "drill-dc-hidden.basin.json").read_text())
    assert len(basin["labels"]) == 2


def test_cli_classify_overrides(tmp_path, capsys):
    code = cli.main(["classify", "drill-dc-hidden", "--probes", "3", "--seed", "1",
                     "--out-dir", str(tmp_path)])
    assert code == 0
    summary = RunSummary.load(tmp_path / "drill-dc-hidden.summary.json")
    assert len(summary.reports["main"].probes) == 3
    assert "hidden" in capsys.readouterr().out
