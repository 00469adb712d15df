import numpy as np
import pytest

from coldcharge.baselines import B1Policy, B2Policy, NoHeatPolicy, ThermostatState, bangbang_heat, queue_charging
from coldcharge.controller import ControllerParams, EvView, SlotContext
from coldcharge.harness import run_episode
from coldcharge.model import ThermalParams
from coldcharge.queues import QueueState

from conftest import flat_scenario, make_session

DT = 1 / 12


def _ctx(temp, demand=20.0, pv=0.0, q_r=20.0):
    p = ThermalParams()
    ev = EvView(id=1, r=5, energy=10, temperature=temp, remaining_demand=demand, headroom=40,
                dT_loss=1.256, params=p)
    qs = QueueState(r_max=5)
    qs.q_by_r[5] = q_r
    qs.h_by_ev[1] = 0.0
    return SlotContext(0, DT, 0.01, pv, -10.0, (ev,), qs)


def test_bangbang_switches_and_holds():
    off = ThermostatState(False)
    on = ThermostatState(True)
    assert bangbang_heat(off, 9.0, 3.0)[0] == 3.0
    assert bangbang_heat(on, 11.0, 3.0)[0] == 0.0
    assert bangbang_heat(on, 10.0, 3.0)[0] == 3.0
    assert bangbang_heat(off, 10.0, 3.0)[0] == 0.0


def test_bangbang_validation():
    with pytest.raises(ValueError):
        ThermostatState(False, 10.5, 9.5)
    with pytest.raises(ValueError):
        bangbang_heat(ThermostatState(), 5.0, -1.0)


def test_b2_charges_at_peak_rate():
    d, _ = B2Policy().decide(_ctx(10.0))
    assert d.p_charge[1] == pytest.approx(6.0)
    assert d.p_heat[1] == 0.0


def test_b2_heats_when_cold():
    d, _ = B2Policy().decide(_ctx(5.0))
    assert d.p_heat[1] == pytest.approx(3.0 - 0.024 * 5.0)
    assert d.p_charge[1] + d.p_heat[1] <= 7.4 + 1e-12


def test_b2_respects_demand():
    d, _ = B2Policy().decide(_ctx(10.0, demand=0.1))
    assert d.p_charge[1] * 0.95 * DT == pytest.approx(0.1)


def test_b1_joint_cap_shrinks_by_heating():
    heat = {1: 3.0}
    d, _ = queue_charging(_ctx(5.0, q_r=500.0), ControllerParams(), heat)
    assert d.p_heat[1] == 3.0
    assert d.p_charge[1] <= 4.4 + 1e-12
    assert d.p_charge[1] == pytest.approx(4.4)


def test_b1_thermostat_is_per_ev():
    pol = B1Policy(ControllerParams())
    pol.decide(_ctx(5.0))
    assert pol.thermostats[1].heater_on


def test_noheat_never_heats_and_drifts_cold():
    sc = flat_scenario([make_session(0, 0, 24, t_initial=2.0)], ambient=-10.0)
    res = run_episode(sc, method="noheat", truth_model="exact")
    temps = [row["temperature"] for r in res.trace.records for row in r.evs]
    assert all(row["p_h"] == 0.0 for r in res.trace.records for row in r.evs)
    assert min(temps) < 0.0
    assert res.metrics.temperature_violations > 0


def test_noheat_policy_zero_heat():
    d, _ = NoHeatPolicy(ControllerParams()).decide(_ctx(5.0))
    assert d.p_heat[1] == 0.0
