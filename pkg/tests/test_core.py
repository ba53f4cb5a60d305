import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from _oracles import lower_sliding, upper_sliding
from hidden_attractors.core import (
    DomainError,
    LowerFrictionParams,
    State,
    TorqueInterval,
    UpperFrictionParams,
    friction_lower,
    friction_upper,
)

speeds = st.floats(min_value=1e-6, max_value=50.0, allow_nan=False)


def test_torque_interval_basics():
    iv = TorqueInterval(-1.0, 2.0)
    assert iv.contains(2.0) and not iv.strictly_contains(2.0)
    assert iv.strictly_contains(0.0)
    assert TorqueInterval.point(0.5).is_point
    assert (-iv).lo == -2.0 and (-iv).hi == 1.0
    with pytest.raises(DomainError):
        TorqueInterval(1.0, 0.0)


def test_state_named_access_and_immutability():
    s = State([1.0, 2.0], 0.5, ("x", "v"))
    assert s["v"] == 2.0
    assert s.as_dict() == {"x": 1.0, "v": 2.0}
    with pytest.raises(ValueError):
        s.coords[0] = 3.0
    with pytest.raises(DomainError):
        State([np.nan], 0.0)


def test_friction_upper_holding_interval_at_rest():
    iv = friction_upper(0.0, UpperFrictionParams())
    assert iv.lo == pytest.approx(-0.3855)
    assert iv.hi == pytest.approx(0.374)


def test_friction_upper_sliding_value():
    iv = friction_upper(1.0, UpperFrictionParams())
    assert iv.is_point
    assert iv.value == pytest.approx(2.79010, abs=1e-12)
    assert iv.value == pytest.approx(upper_sliding(1.0), rel=1e-14)


def test_friction_lower_stribeck_value():
    p = LowerFrictionParams(T_0=0.26, b_l=0.009)
    expected = 0.26 / 0.26 * (0.05 + 0.21 / math.e + 0.009 * 2.2)
    assert friction_lower(2.2, p).value == pytest.approx(expected, rel=1e-14)
    assert friction_lower(0.0, p).lo == -0.26


def test_friction_rejects_non_finite_speed():
    with pytest.raises(DomainError):
        friction_lower(math.inf, LowerFrictionParams())
    with pytest.raises(DomainError):
        friction_upper(math.nan, UpperFrictionParams())


@given(speeds)
def test_lower_friction_is_odd(w):
    p = LowerFrictionParams()
    assert friction_lower(-w, p).value == pytest.approx(-friction_lower(w, p).value, rel=1e-14)
    assert friction_lower(w, p).value == pytest.approx(lower_sliding(w, T_0=p.T_0, b_l=p.b_l), rel=1e-12)


@given(speeds)
def test_symmetric_upper_friction_is_odd(w):
    p = UpperFrictionParams(dT_su=0.0, db_u=0.0)
    assert friction_upper(-w, p).value == pytest.approx(-friction_upper(w, p).value, rel=1e-14)


@given(speeds)
def test_upper_friction_asymmetry(w):
    p = UpperFrictionParams()
    gap = friction_upper(w, p).value + friction_upper(-w, p).value
    assert gap == pytest.approx(2 * (p.dT_su + p.db_u * w), abs=1e-12)


@given(speeds)
def test_sliding_values_leave_holding_interval_continuously(w):
    # as w -> 0+ the sliding torque tends to the interval endpoint
    p = UpperFrictionParams()
    iv = friction_upper(0.0, p)
    assert friction_upper(1e-12, p).value == pytest.approx(iv.hi, abs=1e-9)
    assert friction_upper(-1e-12, p).value == pytest.approx(iv.lo, abs=1e-9)
    assert friction_upper(w, p).value >= iv.hi


def test_parameter_validation():
    with pytest.raises(ValueError):
        LowerFrictionParams(T_0=-1.0)
    with pytest.raises(ValueError):
        UpperFrictionParams(T_su=float("nan"))
