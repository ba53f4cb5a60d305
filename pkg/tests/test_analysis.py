import logging
import math

import numpy as np
import pytest

from _oracles import dc_equilibrium_speed, lower_sliding
from hidden_attractors import analysis
from hidden_attractors.analysis import (
    AttractorReport,
    BasinGrid,
    GridAxis,
    basin_scan,
    classify_attractor,
    find_equilibria,
    jacobian,
    reports_match,
    sommerfeld_ratio,
    steady_state_metrics,
)
from hidden_attractors.core import DomainError
from hidden_attractors.integrator import IntegrationConfig, IntegrationError, Trajectory, integrate
from hidden_attractors.models import DrillDcParams, build_model, with_params


def rotor_report(mean, kind="captured_rotation"):
    return AttractorReport(kind, {"theta_dot": mean}, 0.1, rotor="theta_dot")


def synthetic(model, t, y):
    return Trajectory(model.names, np.asarray(t, float), np.asarray(y, float),
                      config=IntegrationConfig(), model_name=model.name)


# -- jacobian ----------------------------------------------------------------

def test_jacobian_of_harmonic_oscillator():
    jac = jacobian(build_model("oscillator"), np.array([0.3, -0.2]))
    assert jac == pytest.approx(np.array([[0.0, 1.0], [-1.0, 0.0]]), abs=1e-6)


def test_jacobian_induction_current_block_is_diagonal_decay():
    model = build_model("drill_induction")
    jac = jacobian(model, np.array([0.2, 0.0, 0.1, 0.5, 0.01, 0.02, -0.03]))
    assert jac[4:, 4:] == pytest.approx(-10.0 * np.eye(3), abs=1e-6)


def test_jacobian_on_surface_requires_reduced_mode():
    with pytest.raises(DomainError):
        jacobian(build_model("drill_dc"), np.zeros(4))


# -- equilibria ----------------------------------------------------------------

def test_tora_has_no_equilibria():
    assert find_equilibria(build_model("tora")) == []


def test_drill_dc_single_stable_sliding_equilibrium():
    (eq,) = find_equilibria(build_model("drill_dc"))
    w = dc_equilibrium_speed()
    assert eq.state["omega_u"] == pytest.approx(w, abs=1e-9)
    assert eq.state["omega_l"] == pytest.approx(w, abs=1e-9)
    assert eq.state["alpha"] == pytest.approx(lower_sliding(w) / 0.075, abs=1e-8)
    assert eq.residual_norm <= 1e-9
    assert eq.stable and eq.eigen_max_real < 0 and not eq.stuck
    assert np.all(eq.eigenvalues.real < 0)


def test_unpowered_drill_dc_has_a_stuck_family():
    model = build_model("drill_dc", with_params(DrillDcParams(), v=0.0))
    (eq,) = find_equilibria(model)
    assert eq.stuck and eq.stable and math.isnan(eq.eigen_max_real)
    assert eq.family == pytest.approx((-0.26 / 0.075, 0.26 / 0.075))
    assert eq.residual_norm == 0.0


def test_induction_relative_equilibrium_is_stable():
    (eq,) = find_equilibria(build_model("drill_induction"))
    assert eq.reduced[1] == pytest.approx(-1.0982, abs=1e-4)
    assert eq.stable and eq.residual_norm < 1e-10


def test_low_voltage_drill_dc_equilibrium_is_unstable():
    model = build_model("drill_dc", with_params(DrillDcParams(), v=1.5))
    (eq,) = find_equilibria(model)
    assert eq.stable is False and eq.eigen_max_real > 0


@pytest.mark.parametrize("name", ["drill_dc", "drill_induction"])
def test_stable_equilibria_attract_nearby_states(name):
    model = build_model(name)
    for eq in find_equilibria(model):
        if not eq.stable or eq.stuck:
            continue
        y0 = eq.state.coords + 1e-4
        traj = integrate(model, y0, IntegrationConfig(t_end=400))
        rep = steady_state_metrics(traj, model=model)
        target = [eq.state[n] for n in model.velocity_names]
        got = [rep.tail_mean_velocities[n] for n in model.velocity_names]
        assert np.abs(np.subtract(got, target)).max() < 1e-3


# -- steady-state metrics --------------------------------------------------------

def test_constant_trajectory_is_an_equilibrium():
    model = build_model("oscillator")
    t = np.linspace(0, 100, 1001)
    rep = steady_state_metrics(synthetic(model, t, np.zeros((t.size, 2))), model=model)
    assert rep.kind == "equilibrium" and rep.amplitude == 0.0


def test_sinusoid_period_estimate():
    model = build_model("oscillator")
    t = np.linspace(0, 100, 3001)
    y = np.c_[np.sin(math.pi * t), math.pi * np.cos(math.pi * t)]
    rep = steady_state_metrics(synthetic(model, t, y), model=model)
    assert rep.kind == "limit_cycle"
    assert rep.period_estimate == pytest.approx(2.0, abs=0.02)
    assert rep.amplitude == pytest.approx(2.0, abs=1e-3)
    assert rep.tail_mean_velocities["v"] == pytest.approx(0.0, abs=1e-6)


def test_short_trajectory_is_unresolved():
    model = build_model("oscillator")
    t = np.linspace(0, 5, 51)
    rep = steady_state_metrics(synthetic(model, t, np.zeros((51, 2))), model=model)
    assert rep.kind == "unresolved"


def test_decaying_oscillation_is_not_a_limit_cycle():
    model = build_model("oscillator")
    t = np.linspace(0, 100, 5001)
    env = np.exp(-0.05 * t)
    y = np.c_[env * np.sin(math.pi * t), env * math.pi * np.cos(math.pi * t)]
    assert steady_state_metrics(synthetic(model, t, y), model=model).kind == "unresolved"


def test_tora_capture_metrics():
    model = build_model("tora")
    traj = integrate(model, np.zeros(4), IntegrationConfig(t_end=300))
    rep = steady_state_metrics(traj, model=model)
    assert rep.kind == "captured_rotation"
    assert 15 < rep.rotor_mean < 30


# -- sommerfeld ratio ------------------------------------------------------------

def test_sommerfeld_ratio_examples():
    assert sommerfeld_ratio(rotor_report(50.0), rotor_report(50.0)) == 1.0
    assert sommerfeld_ratio(rotor_report(21.0), rotor_report(96.0, "limit_cycle")) == pytest.approx(0.21875)


@pytest.mark.parametrize("bad", [0.0, -3.0])
def test_sommerfeld_ratio_rejects_non_positive_normal_speed(bad):
    with pytest.raises(DomainError):
        sommerfeld_ratio(rotor_report(21.0), rotor_report(bad))


# -- classification --------------------------------------------------------------

def test_equilibrium_reports_are_not_classified():
    rep = AttractorReport("equilibrium", {"v": 0.0}, 0.0)
    out = classify_attractor(build_model("oscillator"), rep, [])
    assert out.classification == "not_applicable" and out.probes == []


def test_no_equilibria_means_hidden_without_probes(monkeypatch):
    def forbidden(*a, **k):
        raise AssertionError("no probe may be launched")
    monkeypatch.setattr(analysis, "integrate", forbidden)
    out = classify_attractor(build_model("tora"), rotor_report(20.0), [])
    assert out.classification == "hidden" and out.probes == []


def test_unstable_equilibrium_with_reachable_cycle_is_self_excited():
    model = build_model("drill_dc", with_params(DrillDcParams(), v=1.5))
    traj = integrate(model, np.zeros(4), IntegrationConfig(t_end=400))
    rep = steady_state_metrics(traj, model=model)
    assert rep.kind == "limit_cycle"
    out = classify_attractor(model, rep, find_equilibria(model), n_probes=8)
    assert out.classification == "self_excited"
    assert len(out.probes) == 8 and any(p.converged for p in out.probes)


def test_classification_is_reproducible_for_a_seed():
    model = build_model("drill_dc")
    traj = integrate(model, np.zeros(4), IntegrationConfig(t_end=400))
    rep = steady_state_metrics(traj, model=model)
    eqs = find_equilibria(model)
    a = classify_attractor(model, rep, eqs, n_probes=5, seed=3)
    b = classify_attractor(model, rep, eqs, n_probes=5, seed=3)
    c = classify_attractor(model, rep, eqs, n_probes=5, seed=4)
    assert a.probes == b.probes and a.probes != c.probes
    assert a.classification == "hidden"


def test_failed_probes_are_excluded_with_a_warning(monkeypatch, caplog):
    model = build_model("drill_dc")
    eqs = find_equilibria(model)
    rep = AttractorReport("limit_cycle", {"omega_u": 6.08, "omega_l": 6.08}, 13.0,
                          tail_ranges={"alpha": 9.6, "omega_u": 0.3, "omega_l": 13.1})

    def failing(*a, **k):
        raise IntegrationError("boom")
    monkeypatch.setattr(analysis, "integrate", failing)
    with caplog.at_level(logging.WARNING, logger="hidden_attractors.analysis"):
        out = classify_attractor(model, rep, eqs, n_probes=4)
    assert [p.converged for p in out.probes] == [None] * 4
    assert out.classification == "hidden"
    assert "4 of 4 probes unresolved" in caplog.text


def test_reports_match_rule():
    a = AttractorReport("limit_cycle", {"w": 10.0}, 1.0)
    assert reports_match(AttractorReport("limit_cycle", {"w": 10.19}, 2.0), a)
    assert not reports_match(AttractorReport("limit_cycle", {"w": 10.21}, 1.0), a)
    assert not reports_match(AttractorReport("equilibrium", {"w": 10.0}, 0.0), a)


# -- basin scan ------------------------------------------------------------------

def test_single_cell_scan_reproduces_integrate():
    model = build_model("drill_dc")
    cfg = IntegrationConfig(t_end=400)
    grid = BasinGrid((GridAxis(("omega_u", "omega_l"), 6.1, 6.1, 1),), {"alpha": 0.0})
    basin = basin_scan(model, grid, cfg)
    direct = steady_state_metrics(integrate(model, np.array([0, 6.1, 6.1, 0]), cfg), model=model)
    assert basin.labels.tolist() == [0]
    assert basin.attractors[0].tail_mean_velocities == direct.tail_mean_velocities


def test_tied_axis_scan_separates_stick_slip_from_normal_operation():
    model = build_model("drill_dc")
    grid = BasinGrid((GridAxis(("omega_u", "omega_l"), 0.0, 10.0, 11),), {"alpha": 0.0})
    basin = basin_scan(model, grid)
    kinds = [basin.attractors[k].kind for k in basin.labels]
    assert kinds[0] == "limit_cycle"
    assert kinds[6] == "equilibrium"


def test_tora_scan_shows_capture_boundary():
    model = build_model("tora")
    grid = BasinGrid((GridAxis("theta_dot", 0.0, 60.0, 7),))
    basin = basin_scan(model, grid, IntegrationConfig(t_end=300))
    kinds = [basin.attractors[k].kind for k in basin.labels]
    assert kinds[0] == "captured_rotation" and kinds[-1] == "limit_cycle"
    switch = [i for i in range(6) if kinds[i] != kinds[i + 1]]
    assert len(switch) == 1


def test_scan_is_independent_of_worker_count():
    model = build_model("drill_dc")
    grid = BasinGrid((GridAxis("omega_u", 0, 10, 3), GridAxis("omega_l", 0, 10, 3)), {"alpha": 0.0})
    a = basin_scan(model, grid, workers=1)
    b = basin_scan(model, grid, workers=2)
    assert np.array_equal(a.labels, b.labels)
    assert [r.to_dict() for r in a.attractors] == [r.to_dict() for r in b.attractors]


def test_failed_cells_are_unresolved(monkeypatch):
    def failing(*a, **k):
        raise IntegrationError("boom")
    monkeypatch.setattr(analysis, "integrate", failing)
    grid = BasinGrid((GridAxis("x", -1, 1, 3),))
    basin = basin_scan(build_model("oscillator"), grid)
    assert basin.labels.tolist() == [-1, -1, -1] and basin.attractors == []


def test_unresolved_reports_are_not_classified():
    rep = AttractorReport("unresolved", {"omega_u": 6.0, "omega_l": 6.1}, 1.4)
    model = build_model("drill_dc")
    out = classify_attractor(model, rep, find_equilibria(model))
    assert out.classification == "not_applicable" and out.probes == []
