"""Episode engine: slot loop, arrival/departure bookkeeping, metrics and traces."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from . import thermal
from .baselines import B1Policy, B2Policy, NoHeatPolicy
from .controller import (
    ControllerParams,
    EvView,
    ProposedPolicy,
    SlotContext,
    check_assumptions,
    drift_bound_B,
    fleet_parameters,
)
from .model import EvRuntimeState, EvSession, Scenario, SlotDecision
from .queues import QueueState, admit_arrivals, advance, remove_departures, settle_slot, temp_queue_update, x_from_decisions

METHODS = ("proposed", "b1", "b2", "noheat", "offline")
TRUTH_MODELS = ("queue", "exact")
FEAS_TOL = 1e-9
TEMP_TOL = 1e-9


class InfeasibleDecisionError(RuntimeError):
    """A policy returned a decision outside the physical constraints."""


@dataclass
class TraceRecord:
    slot: int
    price: float
    pv_cap: float
    ambient: float
    p_pv: float
    p_grid: float
    cost: float
    q_by_r: Dict[int, float]
    y_debt: float
    x_by_r: Dict[int, float]
    a_by_r: Dict[int, float]
    evs: List[dict]
    departed: List[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


@dataclass
class Trace:
    method: str
    dt_hours: float
    horizon: int
    r_max: int
    truth_model: str
    initial_a_by_r: Dict[int, float]
    records: List[TraceRecord]
    final_q_by_r: Dict[int, float]
    final_y: float
    theta_by_ev: Dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class EpisodeMetrics:
    total_cost: float
    fulfillment_ratio: float
    cost_index: float
    heating_ratio: float
    y_final_over_T: float
    temperature_violations: int
    assumption_failures: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    trace: Trace
    params: Optional[ControllerParams] = None
    offline: object = None  # OfflineSolution for the offline method


def _nz(vec: np.ndarray) -> Dict[int, float]:
    return {int(r): float(v) for r, v in enumerate(vec) if r > 0 and v != 0.0}


class OfflinePolicy:
    """Replays a clairvoyant schedule, trimmed to the harness's own caps."""

    name = "offline"

    def __init__(self, solution, scenario: Scenario):
        self.solution = solution
        self.scenario = scenario

    def theta(self, ev: EvSession) -> float:
        return 0.0

    def decide(self, ctx: SlotContext):
        plan = self.solution.decision(ctx.t, ctx.pv_cap)
        pc, ph = {}, {}
        for ev in ctx.evs:
            c = min(max(plan.p_charge.get(ev.id, 0.0), 0.0), ev.peak_charge, ev.demand_cap(ctx.dt))
            h = min(max(plan.p_heat.get(ev.id, 0.0), 0.0), ev.peak_heat, max(ev.params.p_total - c, 0.0))
            pc[ev.id], ph[ev.id] = c, h
        return SlotDecision.from_loads(pc, ph, ctx.pv_cap), {}


def make_policy(
    method: str,
    scenario: Scenario,
    v: float = 600.0,
    gamma: float = 20.0,
    enforce_v_max: bool = True,
    controller_params: Optional[ControllerParams] = None,
    alpha: Optional[float] = None,
    truth_model: str = "queue",
):
    if method == "proposed":
        cp = controller_params or fleet_parameters(scenario, v, gamma, enforce_v_max=enforce_v_max)
        return ProposedPolicy(cp), cp
    if method in ("b1", "noheat"):
        cp = controller_params or ControllerParams(v_weight=v, gamma=gamma)
        return (B1Policy(cp) if method == "b1" else NoHeatPolicy(cp)), cp
    if method == "b2":
        return B2Policy(), None
    if method == "offline":
        from .reference.offline import offline_solve

        sol = offline_solve(scenario, alpha=alpha, truth_model=truth_model)
        return OfflinePolicy(sol, scenario), None
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def check_decision(decision: SlotDecision, ctx: SlotContext, tol: float = FEAS_TOL) -> None:
    ids = {ev.id for ev in ctx.evs}
    extra = (set(decision.p_charge) | set(decision.p_heat)) - ids
    if extra:
        raise InfeasibleDecisionError(f"slot {ctx.t}: power for absent EVs {sorted(extra)}")
    for ev in ctx.evs:
        c = decision.p_charge.get(ev.id, 0.0)
        h = decision.p_heat.get(ev.id, 0.0)
        if c < -tol or h < -tol:
            raise InfeasibleDecisionError(f"slot {ctx.t}, EV {ev.id}: negative power")
        if c > ev.peak_charge + tol or h > ev.peak_heat + tol or c + h > ev.params.p_total + tol:
            raise InfeasibleDecisionError(f"slot {ctx.t}, EV {ev.id}: rate limit exceeded")
        if c > ev.demand_cap(ctx.dt) + tol:
            raise InfeasibleDecisionError(f"slot {ctx.t}, EV {ev.id}: charging beyond demand or capacity")
    if decision.p_pv < -tol or decision.p_grid < -tol or decision.p_pv > ctx.pv_cap + tol:
        raise InfeasibleDecisionError(f"slot {ctx.t}: PV/grid draw out of range")
    if abs(decision.p_pv + decision.p_grid - decision.total_load) > tol:
        raise InfeasibleDecisionError(f"slot {ctx.t}: power balance violated")


def run_episode(
    scenario: Scenario,
    method: str = "proposed",
    v: float = 600.0,
    gamma: float = 20.0,
    truth_model: str = "queue",
    enforce_v_max: bool = True,
    seed: int = 0,
    alpha: Optional[float] = None,
    controller_params: Optional[ControllerParams] = None,
    record_diagnostics: bool = False,
) -> EpisodeResult:
    """Simulate one episode slot by slot.

    Each slot the policy sees prices, PV, ambient temperature, queue backlogs
    and per-EV state; its decision then drives the battery energy, the
    battery temperature (``truth_model``), the queues and the cost. EVs are
    plugged in for slots [t_arrive, t_depart). The run is deterministic; the
    seed is accepted for interface symmetry with the scenario generator.
    """
    if truth_model not in TRUTH_MODELS:
        raise ValueError(f"truth_model must be one of {TRUTH_MODELS}")
    policy, cp = make_policy(method, scenario, v, gamma, enforce_v_max, controller_params, alpha, truth_model)
    dt = scenario.dt_hours
    sessions = sorted(scenario.sessions, key=lambda s: s.id)
    by_arrival: Dict[int, List[EvSession]] = {}
    for ev in sessions:
        by_arrival.setdefault(ev.t_arrive, []).append(ev)

    queues = QueueState(r_max=scenario.r_max)
    states: Dict[int, EvRuntimeState] = {}
    present: Dict[int, EvSession] = {}
    delivered: Dict[int, float] = {}
    thetas: Dict[int, float] = {}

    def admit(evs: Iterable[EvSession], t: int) -> np.ndarray:
        evs = list(evs)
        pairs = [(ev, policy.theta(ev)) for ev in evs]
        a = admit_arrivals(queues, pairs, t)
        for ev, th in pairs:
            states[ev.id] = EvRuntimeState(ev.e_initial, ev.t_initial, th)
            present[ev.id] = ev
            delivered[ev.id] = 0.0
            thetas[ev.id] = th
        return a

    a0 = admit(by_arrival.get(0, []), -1)
    advance(queues, queues.zeros(), a0)

    records: List[TraceRecord] = []
    for t in range(scenario.horizon):
        amb = float(scenario.ambient[t])
        views, ev_rows = [], []
        for i in sorted(present):
            ev, st = present[i], states[i]
            views.append(EvView(
                id=i, r=ev.t_depart - t, energy=st.energy, temperature=st.temperature,
                remaining_demand=ev.demand - delivered[i], headroom=ev.e_cap - st.energy,
                dT_loss=thermal.decay_loss(ev.thermal, amb), params=ev.thermal,
            ))
        ctx = SlotContext(t, dt, float(scenario.price[t]), float(scenario.pv_cap[t]), amb, tuple(views), queues)
        decision, diag = policy.decide(ctx)
        check_decision(decision, ctx)

        r_by_ev = {ev.id: ev.r for ev in views}
        x = x_from_decisions(decision, r_by_ev, {ev.id: ev.params.delta_c for ev in views}, dt, queues.r_max)
        for ev in views:
            p = ev.params
            c = decision.p_charge.get(ev.id, 0.0)
            h = decision.p_heat.get(ev.id, 0.0)
            verdict = check_assumptions(ev.peak_charge, ev.peak_heat, ev.dT_loss, p)
            gain = thermal.heat_gain(p, c, h)
            ev_rows.append({
                "id": ev.id, "r": ev.r, "energy": ev.energy, "temperature": ev.temperature,
                "h": queues.h_by_ev[ev.id], "p_c": c, "p_h": h,
                "cap_c": min(ev.peak_charge, ev.demand_cap(dt)), "cap_h": ev.peak_heat,
                "cap_joint": p.p_total, "dT_loss": ev.dT_loss, "dT_gain": gain,
                "assumptions": [verdict.charge_heat_ok, verdict.heating_ok],
            })
            st = states[ev.id]
            if truth_model == "queue":
                st.temperature = thermal.step_queue(st.temperature, ev.dT_loss, c, h, p)
                temp_queue_update(queues, ev.id, ev.dT_loss, gain)
            else:
                st.temperature = thermal.step_exact(st.temperature, amb, c, h, p)
                queues.h_by_ev[ev.id] = st.temperature - st.theta
            inc = p.delta_c * c * dt
            st.energy += inc
            delivered[ev.id] += inc

        cost = float(scenario.price[t]) * decision.p_grid * dt
        q_snapshot, y_snapshot = _nz(queues.q_by_r), queues.y_debt
        departed = []
        for i in [i for i, ev in present.items() if ev.t_depart == t + 1]:
            departed.append({"id": i, "energy": states[i].energy, "temperature": states[i].temperature})
            del present[i]
        remove_departures(queues, [d["id"] for d in departed])
        a = admit(by_arrival.get(t + 1, []), t) if t + 1 < scenario.horizon else queues.zeros()
        settle_slot(queues, x, a)
        records.append(TraceRecord(
            slot=t, price=float(scenario.price[t]), pv_cap=float(scenario.pv_cap[t]), ambient=amb,
            p_pv=decision.p_pv, p_grid=decision.p_grid, cost=cost, q_by_r=q_snapshot, y_debt=y_snapshot,
            x_by_r=_nz(x), a_by_r=_nz(a), evs=ev_rows, departed=departed,
            diagnostics=diag if record_diagnostics else {},
        ))

    trace = Trace(
        method=method, dt_hours=dt, horizon=scenario.horizon, r_max=queues.r_max, truth_model=truth_model,
        initial_a_by_r=_nz(a0), records=records, final_q_by_r=_nz(queues.q_by_r), final_y=queues.y_debt,
        theta_by_ev=thetas,
    )
    metrics = compute_metrics(trace, scenario.sessions)
    return EpisodeResult(metrics, trace, cp, getattr(policy, "solution", None))


def _ev_states(trace: Trace):
    for rec in trace.records:
        for row in rec.evs:
            yield row["id"], row["temperature"]
        for row in rec.departed:
            yield row["id"], row["temperature"]


def delivered_energy(trace: Trace, sessions: Sequence[EvSession]) -> Dict[int, float]:
    eff = {s.id: s.thermal.delta_c for s in sessions}
    out = {s.id: 0.0 for s in sessions}
    for rec in trace.records:
        for row in rec.evs:
            out[row["id"]] += eff[row["id"]] * row["p_c"] * trace.dt_hours
    return out


def cost_index(total_cost: float, fulfillment_ratio: float) -> float:
    """Cost per percentage point of demand served."""
    return total_cost / (100.0 * fulfillment_ratio) if fulfillment_ratio > 0 else math.nan


def compute_metrics(trace: Trace, sessions: Sequence[EvSession]) -> EpisodeMetrics:
    """Cost, fulfillment, cost index and heating share of one episode.

    Fulfillment counts each EV's delivered energy up to its own demand; an
    episode without demand is fully served by convention.
    """
    dt = trace.dt_hours
    total_cost = float(sum(r.cost for r in trace.records))
    demand = sum(s.demand for s in sessions)
    got = delivered_energy(trace, sessions)
    served = sum(min(got[s.id], s.demand) for s in sessions)
    fulfillment = 1.0 if demand <= 0 else min(max(served / demand, 0.0), 1.0)
    e_charge = sum(row["p_c"] * dt for r in trace.records for row in r.evs)
    e_heat = sum(row["p_h"] * dt for r in trace.records for row in r.evs)
    heating_ratio = e_heat / (e_charge + e_heat) if e_charge + e_heat > 0 else 0.0
    bands = {s.id: (s.thermal.t_low, s.thermal.t_high) for s in sessions}
    violations = sum(
        1 for i, temp in _ev_states(trace)
        if temp < bands[i][0] - TEMP_TOL or temp > bands[i][1] + TEMP_TOL
    )
    failures = sum(1 for r in trace.records for row in r.evs if not all(row["assumptions"]))
    return EpisodeMetrics(
        total_cost=total_cost,
        fulfillment_ratio=fulfillment,
        cost_index=cost_index(total_cost, fulfillment),
        heating_ratio=heating_ratio,
        y_final_over_T=trace.final_y / trace.horizon if trace.horizon else 0.0,
        temperature_violations=violations,
        assumption_failures=failures,
    )


def p1_objective(trace: Trace, sessions: Sequence[EvSession], alpha: float) -> float:
    """Realised offline objective: grid cost plus the departure-energy penalty."""
    final = {}
    for rec in trace.records:
        for row in rec.departed:
            final[row["id"]] = row["energy"]
    penalty = sum(alpha * (final.get(s.id, s.e_initial) - s.e_depart) ** 2 for s in sessions)
    return float(sum(r.cost for r in trace.records)) + penalty


def queue_ledger(trace: Trace) -> dict:
    """Admitted demand against delivered energy plus what is still queued or in debt."""
    admitted = sum(trace.initial_a_by_r.values()) + sum(sum(r.a_by_r.values()) for r in trace.records)
    served = sum(sum(r.x_by_r.values()) for r in trace.records)
    return {
        "admitted": admitted,
        "delivered": served,
        "queued": sum(trace.final_q_by_r.values()),
        "debt": trace.final_y,
    }


def observed_maxima(trace: Trace) -> dict:
    """Largest observed backlogs, arrivals, services and temperature swings."""
    R = trace.r_max
    q_max = np.zeros(R + 2)
    a_max = np.zeros(R + 2)
    x_max = np.zeros(R + 2)
    y_max = trace.final_y
    gain: Dict[int, float] = {}
    loss: Dict[int, float] = {}
    for r, v in trace.initial_a_by_r.items():
        q_max[r] = max(q_max[r], v)
    for rec in trace.records:
        y_max = max(y_max, rec.y_debt)
        for r, v in rec.q_by_r.items():
            q_max[r] = max(q_max[r], v)
        for r, v in rec.a_by_r.items():
            a_max[r] = max(a_max[r], v)
        for r, v in rec.x_by_r.items():
            x_max[r] = max(x_max[r], v)
        for row in rec.evs:
            i = row["id"]
            loss[i] = max(loss.get(i, 0.0), row["dT_loss"])
            gain[i] = max(gain.get(i, 0.0), row.get("dT_gain", 0.0))
    ids = sorted(loss)
    return {
        "q_max": q_max, "y_max": y_max, "a_max": a_max, "x_max": x_max,
        "dT_gain_max": [gain[i] for i in ids], "dT_loss_max": [loss[i] for i in ids], "r_max": R,
    }


def episode_bound_B(trace: Trace, gamma: float) -> float:
    m = observed_maxima(trace)
    return drift_bound_B(m["q_max"], m["y_max"], m["a_max"], m["x_max"],
                         m["dT_gain_max"], m["dT_loss_max"], gamma, m["r_max"])


def replay_states(trace: Trace, scenario: Scenario) -> Dict[int, List[tuple]]:
    """Re-integrate every EV's (energy, temperature) from the recorded decisions."""
    sess = scenario.session_by_id()
    cur = {}
    out: Dict[int, List[tuple]] = {}
    for rec in trace.records:
        for row in rec.evs:
            i = row["id"]
            ev = sess[i]
            if i not in cur:
                cur[i] = (ev.e_initial, ev.t_initial)
            e, temp = cur[i]
            out.setdefault(i, []).append((e, temp))
            p = ev.thermal
            if trace.truth_model == "queue":
                temp = thermal.step_queue(temp, thermal.decay_loss(p, rec.ambient), row["p_c"], row["p_h"], p)
            else:
                temp = thermal.step_exact(temp, rec.ambient, row["p_c"], row["p_h"], p)
            cur[i] = (e + p.delta_c * row["p_c"] * trace.dt_hours, temp)
        for row in rec.departed:
            out[row["id"]].append(cur[row["id"]])
    return out


def recorded_states(trace: Trace) -> Dict[int, List[tuple]]:
    out: Dict[int, List[tuple]] = {}
    for rec in trace.records:
        for row in rec.evs:
            out.setdefault(row["id"], []).append((row["energy"], row["temperature"]))
        for row in rec.departed:
            out[row["id"]].append((row["energy"], row["temperature"]))
    return out


def write_trace(trace: Trace, path) -> None:
    """One JSON object per line: a header line, then one line per slot."""
    header = {k: v for k, v in asdict(trace).items() if k != "records"}
    header["type"] = "header"
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in trace.records:
            fh.write(json.dumps({"type": "slot", **asdict(rec)}) + "\n")


def read_trace(path) -> Trace:
    def keys_to_int(d):
        return {int(k): v for k, v in d.items()}

    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    head = lines[0]
    recs = []
    for obj in lines[1:]:
        obj.pop("type")
        for key in ("q_by_r", "x_by_r", "a_by_r"):
            obj[key] = keys_to_int(obj[key])
        recs.append(TraceRecord(**obj))
    return Trace(
        method=head["method"], dt_hours=head["dt_hours"], horizon=head["horizon"], r_max=head["r_max"],
        truth_model=head["truth_model"], initial_a_by_r=keys_to_int(head["initial_a_by_r"]), records=recs,
        final_q_by_r=keys_to_int(head["final_q_by_r"]), final_y=head["final_y"],
        theta_by_ev=keys_to_int(head["theta_by_ev"]),
    )
