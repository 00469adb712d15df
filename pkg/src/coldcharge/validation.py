"""Self-checks run by ``coldcharge validate``.

Each check returns a :class:`CheckResult`; the CLI exits nonzero when any
of them fails. The same helpers back parts of the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from . import thermal
from .controller import SlotProblem, solve_slot
from .harness import METHODS, queue_ledger, recorded_states, replay_states, run_episode
from .model import Scenario, ThermalParams, validate_scenario
from .reference.lp import lp_solve_p3

BAND_TOL = 1e-9
LEDGER_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str = ""

    def __str__(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}" + (f"  ({self.detail})" if self.detail else "")


def random_slot_problem(rng: np.random.Generator, n: int) -> SlotProblem:
    """Per-slot instance with slopes of both signs and occasionally binding caps."""
    cap_c = rng.uniform(0.0, 7.0, n) * (rng.random(n) > 0.1)
    cap_h = rng.uniform(0.0, 3.0, n) * (rng.random(n) > 0.1)
    cap_joint = np.minimum(rng.uniform(2.0, 9.0, n), 7.4)
    return SlotProblem(
        ev_ids=tuple(range(n)),
        w_c=rng.normal(-1.0, 2.0, n),
        w_h=rng.normal(-0.5, 2.0, n),
        cap_c=cap_c, cap_h=cap_h, cap_joint=cap_joint,
        pv_free=float(rng.uniform(0.0, 10.0)) if rng.random() > 0.2 else 0.0,
        grid_unit_cost=float(rng.uniform(0.0, 3.0)),
    )


def solver_gap(problem: SlotProblem) -> tuple:
    """(relative objective gap, greedy violation, simplex violation)."""
    d = solve_slot(problem)
    obj_g = problem.decision_objective(d)
    obj_lp, d_lp = lp_solve_p3(problem)
    gap = abs(obj_g - obj_lp) / max(1.0, abs(obj_lp))

    def viol(dec):
        pc = np.array([dec.p_charge.get(i, 0.0) for i in problem.ev_ids])
        ph = np.array([dec.p_heat.get(i, 0.0) for i in problem.ev_ids])
        return problem.max_violation(pc, ph)

    return gap, viol(d), viol(d_lp)


def check_solver_equivalence(n_instances: int = 300, max_evs: int = 5, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_gap = worst_viol = 0.0
    for _ in range(n_instances):
        gap, v1, v2 = solver_gap(random_slot_problem(rng, int(rng.integers(1, max_evs + 1))))
        worst_gap = max(worst_gap, gap)
        worst_viol = max(worst_viol, v1, v2)
    ok = worst_gap <= 1e-7 and worst_viol <= 1e-9
    return CheckResult("greedy vs simplex", ok, f"{n_instances} instances, gap {worst_gap:.2e}, violation {worst_viol:.2e}")


def random_thermal_params(rng: np.random.Generator) -> ThermalParams:
    return ThermalParams(
        q=float(rng.uniform(0.3, 2.0)),
        eta=float(rng.uniform(0.01, 0.1)),
        t_low=float(rng.uniform(-5.0, 5.0)),
        t_high=float(rng.uniform(12.0, 30.0)),
    )


def decay_crossing_slot(params: ThermalParams, ambient: float, max_slots: int = 100_000) -> float:
    """Fractional slot at which free cooling from t_high reaches t_low."""
    temp, k = params.t_high, 0
    while k < max_slots:
        nxt = thermal.step_exact(temp, ambient, 0.0, 0.0, params)
        if nxt <= params.t_low:
            return k + (temp - params.t_low) / (temp - nxt)
        temp, k = nxt, k + 1
    return math.inf


def check_thermal_identities(n_draws: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst_id = worst_cross = 0.0
    for _ in range(n_draws):
        p = random_thermal_params(rng)
        amb = p.t_low - float(rng.uniform(1.0, 30.0))
        k = thermal.decay_slots(p, amb)
        worst_id = max(worst_id, abs(thermal.decay_loss(p, amb) * k - (p.t_high - p.t_low)))
        worst_cross = max(worst_cross, abs(decay_crossing_slot(p, amb) - k))
    ok = worst_id <= 1e-9 and worst_cross <= 0.5
    return CheckResult("cooling identities", ok, f"loss*K error {worst_id:.2e}, crossing error {worst_cross:.3f} slot")


def check_scenario(scenario: Scenario, label: str = "scenario") -> CheckResult:
    problems = validate_scenario(scenario)
    return CheckResult(f"{label} valid", not problems, "; ".join(map(str, problems[:3])))


def check_episode_invariants(scenario: Scenario, methods: Iterable[str], label: str = "scenario",
                             truth_model: str = "queue") -> List[CheckResult]:
    """Queue conservation and state replay for each method."""
    out = []
    for m in methods:
        trace = run_episode(scenario, method=m, truth_model=truth_model).trace
        led = queue_ledger(trace)
        err = abs(led["admitted"] - led["delivered"] - led["queued"] - led["debt"])
        out.append(CheckResult(f"{label}/{m} queue conservation", err <= LEDGER_TOL, f"residual {err:.2e} kWh"))
        rec, rep = recorded_states(trace), replay_states(trace, scenario)
        drift = max(
            (max(abs(a[0] - b[0]), abs(a[1] - b[1])) for i in rec for a, b in zip(rec[i], rep[i])),
            default=0.0,
        )
        out.append(CheckResult(f"{label}/{m} state replay", drift <= 1e-9, f"max drift {drift:.2e}"))
    return out


def run_all(scenarios: Sequence[tuple], methods: Optional[Iterable[str]] = None, quick: bool = False) -> List[CheckResult]:
    """``scenarios`` is a sequence of (label, Scenario)."""
    methods = tuple(methods or [m for m in METHODS if m != "offline"])
    results = [
        check_solver_equivalence(100 if quick else 1000),
        check_thermal_identities(),
    ]
    for label, sc in scenarios:
        results.append(check_scenario(sc, label))
        if results[-1].ok:
            results.extend(check_episode_invariants(sc, methods, label))
    return results
