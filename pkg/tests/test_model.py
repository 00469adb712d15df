import numpy as np
import pytest

from coldcharge.model import SlotDecision, ThermalParams, validate_scenario
from conftest import flat_scenario, make_session


def test_session_demand_and_duration():
    s = make_session(0, 3, 10, e_initial=12.5, e_depart=45.0)
    assert s.demand == pytest.approx(32.5)
    assert s.duration == 7


def test_zeta_default():
    assert ThermalParams().zeta == pytest.approx(1 - 0.048 / 0.72)


def test_valid_scenario_has_no_violations(small_scenario):
    assert validate_scenario(small_scenario) == []


def test_scenario_arrays_are_read_only(small_scenario):
    with pytest.raises(ValueError):
        small_scenario.price[0] = 1.0


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(t_arrive=5, t_depart=5), "t_depart"),
        (dict(t_arrive=20, t_depart=30), "window"),
        (dict(e_initial=30.0, e_depart=20.0), "e_depart"),
        (dict(e_depart=60.0), "e_depart"),
        (dict(t_initial=-1.0), "t_initial"),
    ],
)
def test_bad_sessions_are_reported(kwargs, field):
    base = dict(i=0, t_arrive=0, t_depart=10)
    base.update(kwargs)
    sc = flat_scenario([make_session(**base)])
    assert any(v.field.endswith(field) for v in validate_scenario(sc))


def test_duplicate_ids_and_price_above_cap():
    sc = flat_scenario([make_session(0, 0, 5), make_session(0, 1, 6)], price=0.1, price_cap=0.05)
    fields = {v.field for v in validate_scenario(sc)}
    assert "session[0].id" in fields
    assert "price[0]" in fields


def test_bad_thermal_params_are_reported():
    bad = ThermalParams(delta_c=1.5, eta=1.0, t_low=5.0, t_high=5.0)
    fields = {v.field for v in bad.violations()}
    assert {"thermal.delta_c", "thermal.eta", "thermal.t_low"} <= fields


def test_decision_from_loads_uses_pv_first():
    d = SlotDecision.from_loads({1: 4.0}, {1: 1.0}, pv_cap=3.0)
    assert d.p_pv == 3.0 and d.p_grid == 2.0
    d = SlotDecision.from_loads({1: 1.0}, {}, pv_cap=3.0)
    assert d.p_pv == 1.0 and d.p_grid == 0.0
    assert d.total_load == 1.0


def test_shifted_translates_ambient_and_bounds(small_scenario):
    sh = small_scenario.shifted(-12.0)
    assert np.array_equal(sh.ambient, small_scenario.ambient - 12.0)
    assert sh.ambient_low == small_scenario.ambient_low - 12.0
    assert sh.ambient_high == small_scenario.ambient_high - 12.0
    assert validate_scenario(sh) == []
