import numpy as np
import pytest

from coldcharge import thermal
from coldcharge.harness import p1_objective, run_episode
from coldcharge.model import Scenario
from coldcharge.reference.offline import default_alpha, offline_solve

from conftest import flat_scenario, make_session

UNIT = 0.5  # kW


def lattice_dp(scenario: Scenario, ev, alpha: float, max_heat_units: int = 40) -> float:
    """Exact optimum of one EV's schedule with powers on a 0.5 kW lattice (PV off, queue cooling).

    The state is the pair of cumulative charge and heat units; both energy and
    temperature follow from it exactly.
    """
    p, dt = ev.thermal, scenario.dt_hours
    de = p.delta_c * dt * UNIT
    nc_max = int(np.ceil(max(ev.demand, 0) / de)) + 2
    gc, gh = (1 - p.delta_c) / p.q * UNIT, p.delta_h / p.q * UNIT
    NC, NH = np.meshgrid(np.arange(nc_max + 1), np.arange(max_heat_units + 1), indexing="ij")
    val = np.full(NC.shape, np.inf)
    val[0, 0] = 0.0
    temp = np.full(NC.shape, ev.t_initial)
    drop = 0.0
    for t in range(ev.t_arrive, ev.t_depart):
        loss = thermal.decay_loss(p, float(scenario.ambient[t]))
        cap_c = np.floor(np.maximum(p.p_c_base + p.beta_c * temp, 0) / UNIT + 1e-9)
        cap_h = np.floor(np.maximum(p.p_h_base - p.beta_h * temp, 0) / UNIT + 1e-9)
        new = np.full(NC.shape, np.inf)
        drop += loss
        price = float(scenario.price[t]) * dt * UNIT
        for a in range(int(p.p_c_base / UNIT + 1) + int(p.beta_c * p.t_high / UNIT) + 1):
            for b in range(int(p.p_h_base / UNIT) + 1):
                if (a + b) * UNIT > p.p_total + 1e-9:
                    continue
                ok = (cap_c >= a) & (cap_h >= b) & np.isfinite(val)
                src = np.where(ok, val + price * (a + b), np.inf)
                shifted = np.full(NC.shape, np.inf)
                shifted[a:, b:] = src[: NC.shape[0] - a, : NC.shape[1] - b]
                new = np.minimum(new, shifted)
        temp = ev.t_initial - drop + gc * NC + gh * NH
        energy = ev.e_initial + de * NC
        new[(temp < p.t_low - 1e-9) | (temp > p.t_high + 1e-9) | (energy > ev.e_cap + 1e-9)] = np.inf
        val = new
    energy = ev.e_initial + de * NC
    return float(np.min(val + alpha * (energy - ev.e_depart) ** 2))


def test_zero_demand_zero_schedule():
    sc = flat_scenario([make_session(0, 0, 6, e_initial=10, e_depart=10, t_initial=15)], horizon=6, ambient=-1.0)
    sol = offline_solve(sc)
    assert sol.cost == pytest.approx(0.0, abs=1e-7)
    assert np.all(sol.p_charge[0] <= 1e-6)
    assert sol.residuals.worst < 1e-6


def test_abundant_pv_is_free():
    sc = flat_scenario([make_session(0, 0, 12, e_initial=10, e_depart=12, t_initial=5)], horizon=12, pv=20.0)
    sol = offline_solve(sc)
    assert sol.cost == pytest.approx(0.0, abs=1e-7)
    assert sol.energy[0][-1] == pytest.approx(12.0, abs=1e-5)
    assert sol.residuals.worst < 1e-6


def test_two_evs_match_lattice_dp():
    rng = np.random.default_rng(0)
    h = 24
    sessions = [
        make_session(0, 0, 24, e_initial=10, e_depart=11.5, t_initial=5.0),
        make_session(1, 4, 20, e_initial=20, e_depart=21.0, t_initial=3.0),
    ]
    sc = Scenario.build(np.full(h, -2.0), rng.uniform(0.1, 0.15, h), np.zeros(h), sessions, 0.3)
    alpha = 5.0
    sol = offline_solve(sc, alpha=alpha)
    dp = sum(lattice_dp(sc, ev, alpha) for ev in sessions)
    assert sol.residuals.worst < 1e-6
    assert sol.objective <= dp + 1e-6
    assert dp <= 1.02 * sol.objective


def test_temperature_stays_in_band(small_scenario):
    sol = offline_solve(small_scenario)
    for ev in small_scenario.sessions:
        temps = sol.temperature[ev.id]
        assert temps.min() >= ev.thermal.t_low - 1e-6
        assert temps.max() <= ev.thermal.t_high + 1e-6


def test_offline_beats_online(small_scenario):
    alpha = default_alpha(small_scenario)
    sol = offline_solve(small_scenario, alpha=alpha)
    for method in ("proposed", "b1", "b2", "noheat"):
        res = run_episode(small_scenario, method=method, alpha=alpha)
        online = p1_objective(res.trace, small_scenario.sessions, alpha)
        assert sol.objective <= online * (1 + 1e-4) + 1e-6


def test_offline_policy_replays_in_harness(small_scenario):
    res = run_episode(small_scenario, method="offline")
    assert res.metrics.temperature_violations == 0
    assert res.metrics.fulfillment_ratio > 0.99


def test_invalid_inputs(small_scenario):
    with pytest.raises(ValueError):
        offline_solve(small_scenario, alpha=0.0)
    with pytest.raises(ValueError):
        offline_solve(small_scenario, truth_model="bogus")
    with pytest.raises(ValueError):
        offline_solve(small_scenario, max_evs=2)
