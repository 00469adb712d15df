"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from coldcharge.harness import METHODS, episode_bound_B, p1_objective, queue_ledger, run_episode
from coldcharge.ingest import GeneratorConfig, generate_scenario, load_series, write_series
from coldcharge.model import Scenario, validate_scenario
from coldcharge.reference.lp import lp_solve_p3
from coldcharge.reference.offline import default_alpha, offline_solve
from coldcharge.validation import check_solver_equivalence, check_thermal_identities, random_slot_problem

from conftest import flat_scenario, make_session
from test_lp import GRID, grid_search

pytestmark = pytest.mark.acceptance

ONLINE = ("proposed", "b1", "b2", "noheat")


def _clipped(sc: Scenario, lo: float, hi: float) -> Scenario:
    return Scenario.build(np.clip(sc.ambient, lo, hi), sc.price, sc.pv_cap, sc.sessions, sc.price_cap, sc.dt_hours)


def test_c01_temperature_feasibility(verdict):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    violations = failures = 0
    for seed in range(100):
        cfg = GeneratorConfig(seed=seed, ev_count=int(rng.integers(10, 31)),
                              ambient_mean=float(rng.uniform(-12.0, -8.0)))
        sc = _clipped(generate_scenario(cfg), -15.0, -5.0)
        m = run_episode(sc, method="proposed").metrics
        violations += m.temperature_violations
        failures += m.assumption_failures
    elapsed = time.perf_counter() - start
    verdict(1, "temperature feasibility", violations == 0 and failures == 0 and elapsed < 60,
            f"100 scenarios, {violations} violations, {failures} assumption failures, {elapsed:.1f} s")


def test_c02_solver_exactness(verdict):
    start = time.perf_counter()
    eq = check_solver_equivalence(n_instances=1000, max_evs=5, seed=0)
    rng = np.random.default_rng(50)
    worst_excess = -np.inf
    below = 0
    for _ in range(50):
        prob = random_slot_problem(rng, int(rng.integers(1, 6)))
        obj, _ = lp_solve_p3(prob)
        grid = grid_search(prob)
        bound = GRID * float(np.sum(np.abs(prob.w_c) + np.abs(prob.w_h)))
        worst_excess = max(worst_excess, (grid - obj) - bound)
        below += grid < obj - 1e-9
    elapsed = time.perf_counter() - start
    ok = eq.ok and worst_excess <= 1e-9 and below == 0 and elapsed < 30
    verdict(2, "solver exactness", ok, f"{eq.detail}; grid excess over bound {worst_excess:.2e}; {elapsed:.1f} s")


def test_c03_thermal_identities(verdict):
    res = check_thermal_identities(n_draws=100, seed=7)
    verdict(3, "thermal identities", res.ok, res.detail)


def _fixtures(small):
    return {
        "small": small,
        "empty": flat_scenario([]),
        "single": flat_scenario([make_session(0, 0, 24, e_initial=5.0, e_depart=30.0)]),
        "overlap": flat_scenario([make_session(i, i, 12 + 2 * i, t_initial=float(i)) for i in range(4)], pv=3.0),
        "generated": generate_scenario(GeneratorConfig(seed=11, ev_count=12)),
    }


def test_c04_queue_conservation(small_scenario, verdict):
    worst = 0.0
    runs = 0
    for name, sc in _fixtures(small_scenario).items():
        for method in METHODS:
            for truth in ("queue", "exact"):
                led = queue_ledger(run_episode(sc, method=method, truth_model=truth).trace)
                worst = max(worst, abs(led["admitted"] - led["delivered"] - led["queued"] - led["debt"]))
                runs += 1
    verdict(4, "queue conservation", worst <= 1e-6, f"{runs} episodes, worst residual {worst:.2e} kWh")


def test_c05_clairvoyance_dominance(verdict):
    worst_gap = -np.inf
    worst_kkt = 0.0
    for seed in range(20):
        sc = generate_scenario(GeneratorConfig(seed=100 + seed, ev_count=3 + seed % 8))
        alpha = default_alpha(sc)
        sol = offline_solve(sc, alpha=alpha)
        kkt = sol.residuals.worst
        worst_kkt = max(worst_kkt, kkt)
        for method in ONLINE:
            online = p1_objective(run_episode(sc, method=method, alpha=alpha).trace, sc.sessions, alpha)
            slack = 1e-4 * abs(online) + kkt
            worst_gap = max(worst_gap, (sol.objective - online) - slack)
    ok = worst_gap <= 0 and worst_kkt < 1e-6
    verdict(5, "clairvoyance dominance", ok, f"20 scenarios, worst margin {worst_gap:.3e}, worst KKT {worst_kkt:.2e}")


def test_c06_drift_bound(verdict):
    sc = generate_scenario(GeneratorConfig(seed=5, ev_count=4, days=5))
    res = run_episode(sc, method="proposed")
    v, gamma = 600.0, 20.0
    B = episode_bound_B(res.trace, gamma)
    sol = offline_solve(sc)
    T = sc.horizon
    online_avg = res.metrics.total_cost / T
    offline_avg = sol.objective / T
    ok = online_avg <= offline_avg + B / v
    verdict(6, "drift-plus-penalty bound", ok,
            f"online {online_avg:.3e} <= offline {offline_avg:.3e} + B/V {B / v:.3e}")


def test_c07_sensitivity(verdict):
    start = time.perf_counter()
    sc = generate_scenario(GeneratorConfig(seed=0, ev_count=20))
    costs = [run_episode(sc, method="proposed", v=v).metrics.total_cost for v in range(100, 700, 100)]
    fulfil = [run_episode(sc, method="proposed", gamma=g).metrics.fulfillment_ratio for g in (5, 10, 20, 40)]
    cost_steps = [b / a - 1 for a, b in zip(costs, costs[1:])]
    fulfil_steps = [b - a for a, b in zip(fulfil, fulfil[1:])]
    elapsed = time.perf_counter() - start
    ok = max(cost_steps) <= 0.02 and min(fulfil_steps) >= -0.005 and elapsed < 300
    verdict(7, "sensitivity trends", ok,
            f"largest cost rise {100 * max(cost_steps):+.2f}%, largest fulfillment drop "
            f"{100 * min(fulfil_steps):+.2f} pp, {elapsed:.1f} s")


def test_c08_method_ordering(verdict):
    index = {m: [] for m in METHODS}
    fulfil = {m: [] for m in METHODS}
    for seed in range(10):
        sc = generate_scenario(GeneratorConfig(seed=200 + seed, ev_count=10))
        for m in METHODS:
            met = run_episode(sc, method=m, truth_model="exact").metrics
            index[m].append(met.cost_index)
            fulfil[m].append(met.fulfillment_ratio)
    idx = {m: np.array(v) for m, v in index.items()}
    ful = {m: np.array(v) for m, v in fulfil.items()}
    others = [m for m in METHODS if m != "noheat"]
    wins = {
        "proposed<b1": int(np.sum(idx["proposed"] < idx["b1"])),
        "proposed<b2": int(np.sum(idx["proposed"] < idx["b2"])),
        "noheat lowest fulfillment": int(np.sum(np.all([ful["noheat"] < ful[m] for m in others], axis=0))),
        "offline lowest index": int(np.sum(np.all([idx["offline"] < idx[m] for m in ONLINE], axis=0))),
    }
    med = {m: float(np.median(idx[m])) for m in METHODS}
    medians_ok = med["proposed"] < med["b1"] and med["proposed"] < med["b2"] and med["offline"] == min(med.values())
    ok = medians_ok and all(w >= 8 for w in wins.values())
    detail = ", ".join(f"{k} {w}/10" for k, w in wins.items())
    verdict(8, "method ordering", ok, detail + "; median index " + " ".join(f"{m}={med[m]:.2e}" for m in METHODS))


def test_c09_extreme_cold(verdict):
    sc = generate_scenario(GeneratorConfig(seed=3, ev_count=10, ambient_mean=-30.0))
    met = {m: run_episode(sc, method=m, truth_model="exact").metrics for m in ONLINE}
    ratios = {m: met[m].heating_ratio for m in ("proposed", "b1", "b2")}
    ok = min(ratios.values()) > 0.25 and met["noheat"].fulfillment_ratio < 0.70
    verdict(9, "extreme cold", ok, " ".join(f"{m} heat {100 * r:.1f}%" for m, r in ratios.items())
            + f"; noheat fulfillment {100 * met['noheat'].fulfillment_ratio:.1f}%")


def test_c10_determinism_and_round_trips(tmp_path, verdict):
    sc = generate_scenario(GeneratorConfig(seed=42, ev_count=15))
    same = all(
        run_episode(sc, method=m, seed=42).metrics == run_episode(sc, method=m, seed=42).metrics
        for m in METHODS
    )
    rng = np.random.default_rng(0)
    trips = True
    for kind, vals in (("ambient", rng.normal(-10, 3, 288)), ("price", rng.uniform(0, 0.05, 288)),
                       ("pv", rng.uniform(0, 30, 288))):
        path = tmp_path / f"{kind}.csv"
        write_series(path, vals)
        trips &= bool(np.array_equal(load_series(path, kind), vals))
    valid = all(
        not validate_scenario(generate_scenario(GeneratorConfig(seed=s, ev_count=s % 31, ambient_offset=float(s % 7) - 5)))
        for s in range(100)
    )
    verdict(10, "determinism and round-trips", same and trips and valid,
            f"bit-identical metrics {same}, CSV identity {trips}, generated scenarios valid {valid}")
