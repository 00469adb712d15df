"""Drift-plus-penalty charging/heating controller.

Each slot the controller minimises a linear function of the per-EV charging
and heating powers plus ``V * price * dt`` times the power bought from the
grid. The linear weights come from the queue backlogs: demand queues and the
debt queue reward charging, the virtual temperature queue ``H = T - theta``
rewards heating when the battery sits below its offset and penalises it
above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from . import thermal
from .model import EvSession, Scenario, SlotDecision, ThermalParams
from .queues import QueueState
from .thermal import ThermalBounds


class TemperatureBandError(ValueError):
    """No admissible V: the temperature band is too narrow for this climate."""


@dataclass(frozen=True)
class ControllerParams:
    v_weight: float = 600.0
    gamma: float = 20.0
    theta_by_ev: Mapping[int, float] = field(default_factory=dict)
    v_max: float = math.inf

    def __post_init__(self):
        if not self.v_weight > 0:
            raise ValueError("v_weight must be > 0")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")


def compute_theta(params: ThermalParams, bounds: ThermalBounds, v: float, price_cap: float, dt: float) -> float:
    """Temperature offset of the virtual queue.

    The worst-case net cooling over the horizon is taken with zero heat gain,
    i.e. ``bounds.dT_loss_max``.
    """
    if not v > 0:
        raise ValueError("v must be > 0")
    return params.q * v * price_cap * dt / params.delta_h + bounds.dT_loss_max + params.t_low


def compute_v_max(params: ThermalParams, bounds: ThermalBounds, price_cap: float, dt: float) -> float:
    """Largest V for which the offset still leaves room for one slot of swing each way."""
    net_gain = bounds.dT_gain_max - bounds.dT_loss_min
    numerator = (params.t_high - params.t_low) - net_gain - bounds.dT_loss_max
    if numerator <= 0:
        raise TemperatureBandError(
            f"temperature band too narrow for this climate: margin {numerator:.6g} degC <= 0"
        )
    denom = params.q * price_cap * dt / params.delta_h
    return math.inf if denom == 0 else numerator / denom


def fleet_parameters(
    scenario: Scenario, v: float, gamma: float, enforce_v_max: bool = True
) -> ControllerParams:
    """Per-EV offsets and the fleet-wide V limit for a scenario.

    With ``enforce_v_max`` a V above the limit raises ValueError.
    """
    thetas: Dict[int, float] = {}
    v_max = math.inf
    cache: Dict[ThermalParams, Tuple[ThermalBounds, float]] = {}
    for ev in scenario.sessions:
        if ev.thermal not in cache:
            b = thermal.thermal_bounds(ev.thermal, scenario.ambient_low, scenario.ambient_high)
            vm = compute_v_max(ev.thermal, b, scenario.price_cap, scenario.dt_hours) if enforce_v_max else math.inf
            cache[ev.thermal] = (b, vm)
        b, vm = cache[ev.thermal]
        v_max = min(v_max, vm)
        thetas[ev.id] = compute_theta(ev.thermal, b, v, scenario.price_cap, scenario.dt_hours)
    if enforce_v_max and v > v_max:
        raise ValueError(f"V={v} exceeds V_max={v_max:.6g}")
    return ControllerParams(v_weight=v, gamma=gamma, theta_by_ev=thetas, v_max=v_max)


@dataclass(frozen=True)
class AssumptionVerdict:
    charge_heat_ok: bool  # charging alone never warms the pack
    heating_ok: bool  # full available heating outpaces the loss

    @property
    def ok(self) -> bool:
        return self.charge_heat_ok and self.heating_ok


def check_assumptions(
    peak_charge: float, peak_heat: float, dT_loss: float, params: ThermalParams, tol: float = 1e-12
) -> AssumptionVerdict:
    charge_heat = (1.0 - params.delta_c) * peak_charge / params.q - dT_loss
    heating = params.delta_h * min(peak_heat, params.p_total - peak_charge) / params.q - dT_loss
    return AssumptionVerdict(charge_heat <= tol, heating >= -tol)


@dataclass(frozen=True)
class EvView:
    """What a policy sees of one plugged-in EV at the start of a slot."""

    id: int
    r: int  # remaining parking slots, >= 1
    energy: float
    temperature: float
    remaining_demand: float  # kWh still owed to this EV
    headroom: float  # kWh of battery capacity left
    dT_loss: float
    params: ThermalParams

    @property
    def peak_charge(self) -> float:
        return thermal.peak_charge_rate(self.params, self.temperature)

    @property
    def peak_heat(self) -> float:
        return thermal.peak_heat_rate(self.params, self.temperature)

    def demand_cap(self, dt: float) -> float:
        """Charging power that keeps delivered energy within demand and capacity."""
        room = max(0.0, min(self.remaining_demand, self.headroom))
        return room / (self.params.delta_c * dt)


@dataclass(frozen=True)
class SlotContext:
    t: int
    dt: float
    price: float
    pv_cap: float
    ambient: float
    evs: Tuple[EvView, ...]
    queues: QueueState


@dataclass(frozen=True)
class SlotProblem:
    """Linear per-slot problem over boxed per-EV powers with a shared PV pool.

    minimise  sum(w_c*p_c + w_h*p_h) + grid_unit_cost * max(sum(p_c + p_h) - pv_free, 0)
    s.t.      0 <= p_c <= cap_c, 0 <= p_h <= cap_h, p_c + p_h <= cap_joint
    """

    ev_ids: Tuple[int, ...]
    w_c: np.ndarray
    w_h: np.ndarray
    cap_c: np.ndarray
    cap_h: np.ndarray
    cap_joint: np.ndarray
    pv_free: float
    grid_unit_cost: float

    def __post_init__(self):
        for name in ("w_c", "w_h", "cap_c", "cap_h", "cap_joint"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("cap_c", "cap_h", "cap_joint"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be >= 0")
        if self.grid_unit_cost < 0 or self.pv_free < 0:
            raise ValueError("grid_unit_cost and pv_free must be >= 0")

    @property
    def n(self) -> int:
        return len(self.ev_ids)

    def objective(self, p_c: np.ndarray, p_h: np.ndarray) -> float:
        load = float(np.sum(p_c) + np.sum(p_h))
        return float(self.w_c @ p_c + self.w_h @ p_h) + self.grid_unit_cost * max(load - self.pv_free, 0.0)

    def decision_objective(self, d: SlotDecision) -> float:
        pc = np.array([d.p_charge.get(i, 0.0) for i in self.ev_ids])
        ph = np.array([d.p_heat.get(i, 0.0) for i in self.ev_ids])
        return self.objective(pc, ph)

    def max_violation(self, p_c: np.ndarray, p_h: np.ndarray) -> float:
        """Largest violation of the box and joint-cap constraints."""
        if self.n == 0:
            return 0.0
        return float(max(
            np.max(-p_c), np.max(-p_h),
            np.max(p_c - self.cap_c), np.max(p_h - self.cap_h),
            np.max(p_c + p_h - self.cap_joint), 0.0,
        ))


def charge_slope(ev: EvView, h: float, queues: QueueState, gamma: float, dt: float, with_thermal: bool = True) -> float:
    p = ev.params
    w = -(gamma / ev.r) * queues.q_by_r[ev.r] * p.delta_c * dt
    if ev.r == 1:
        w -= gamma * queues.y_debt * p.delta_c * dt
    if with_thermal:
        w += h * (1.0 - p.delta_c) / p.q
    return float(w)


def assemble_slot_problem(ctx: SlotContext, cp: ControllerParams) -> SlotProblem:
    ids, w_c, w_h, cap_c, cap_h, cap_j = [], [], [], [], [], []
    for ev in ctx.evs:
        h = ctx.queues.h_by_ev[ev.id]
        ids.append(ev.id)
        w_c.append(charge_slope(ev, h, ctx.queues, cp.gamma, ctx.dt))
        w_h.append(h * ev.params.delta_h / ev.params.q)
        cap_c.append(min(ev.peak_charge, ev.demand_cap(ctx.dt)))
        cap_h.append(ev.peak_heat)
        cap_j.append(ev.params.p_total)
    return SlotProblem(
        ev_ids=tuple(ids), w_c=np.array(w_c), w_h=np.array(w_h), cap_c=np.array(cap_c),
        cap_h=np.array(cap_h), cap_joint=np.array(cap_j), pv_free=max(ctx.pv_cap, 0.0),
        grid_unit_cost=cp.v_weight * ctx.price * ctx.dt,
    )


CHARGE, HEAT = 0, 1


def _greedy(problem: SlotProblem) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, int, float]]]:
    n = problem.n
    p = np.zeros((2, n))
    if n == 0:
        return p[0], p[1], []
    w = np.vstack([problem.w_c, problem.w_h])
    cap = np.vstack([problem.cap_c, problem.cap_h])
    # Per EV the cheaper variable fills first (charging on ties), and the
    # second one gets whatever the joint cap leaves.
    first = np.where(problem.w_h < problem.w_c, HEAT, CHARGE)
    idx = np.arange(n)
    len1 = np.minimum(cap[first, idx], problem.cap_joint)
    len2 = np.minimum(cap[1 - first, idx], np.maximum(problem.cap_joint - len1, 0.0))

    kinds = np.concatenate([first, 1 - first])
    owners = np.concatenate([idx, idx])
    lengths = np.concatenate([len1, len2])
    slopes = w[kinds, owners]
    ids = np.asarray(problem.ev_ids)[owners]
    order = np.lexsort((kinds, ids, slopes))

    used = 0.0
    alloc_log = []
    pv, gc = problem.pv_free, problem.grid_unit_cost
    for s in order:
        slope, length = slopes[s], lengths[s]
        if slope >= 0:
            break
        if length <= 0:
            continue
        take = min(length, max(pv - used, 0.0))
        rest = length - take
        if rest > 0 and slope + gc < 0:
            take = length
        if take <= 0:
            break
        k, i = kinds[s], owners[s]
        p[k, i] += take
        used += take
        alloc_log.append((int(problem.ev_ids[i]), int(k), float(take)))
        if take < length:
            break
    return p[0], p[1], alloc_log


def solve_slot(problem: SlotProblem) -> SlotDecision:
    """Exact minimiser of the per-slot problem by sorted-segment greedy allocation."""
    p_c, p_h, _ = _greedy(problem)
    return _to_decision(problem, p_c, p_h)


def solve_slot_detailed(problem: SlotProblem) -> Tuple[SlotDecision, List[Tuple[int, int, float]]]:
    """Like :func:`solve_slot` but also returns the allocation order (ev id, kind, kW)."""
    p_c, p_h, order = _greedy(problem)
    return _to_decision(problem, p_c, p_h), order


def _to_decision(problem: SlotProblem, p_c: np.ndarray, p_h: np.ndarray) -> SlotDecision:
    pc = {i: float(v) for i, v in zip(problem.ev_ids, p_c)}
    ph = {i: float(v) for i, v in zip(problem.ev_ids, p_h)}
    return SlotDecision.from_loads(pc, ph, problem.pv_free)


class ProposedPolicy:
    """Coordinated charging and heating from the per-slot drift-plus-penalty problem."""

    name = "proposed"

    def __init__(self, params: ControllerParams):
        self.params = params

    def theta(self, ev: EvSession) -> float:
        return self.params.theta_by_ev[ev.id]

    def decide(self, ctx: SlotContext) -> Tuple[SlotDecision, dict]:
        problem = assemble_slot_problem(ctx, self.params)
        decision, order = solve_slot_detailed(problem)
        diag = {
            "w_c": problem.w_c.tolist(),
            "w_h": problem.w_h.tolist(),
            "allocation": order,
        }
        return decision, diag


def drift_bound_B(
    q_max: Sequence[float],
    y_max: float,
    a_max: Sequence[float],
    x_max: Sequence[float],
    dT_gain_max: Sequence[float],
    dT_loss_max: Sequence[float],
    gamma: float,
    r_max: int,
) -> float:
    """Constant of the drift-plus-penalty performance bound.

    ``q_max``, ``a_max`` and ``x_max`` are indexed by remaining time r; index
    0 is ignored and missing entries (including r = R + 1) count as zero.
    """
    R = int(r_max)

    def padded(v):
        out = np.zeros(R + 2)
        v = np.asarray(v, dtype=float)[: R + 2]
        out[: len(v)] = v
        return out

    Q, A, X = padded(q_max), padded(a_max), padded(x_max)
    r = np.arange(1, R + 1)
    b = gamma / (2 * (R + 1)) * Q[R + 1] ** 2 + gamma / 4 * Q[1] ** 2 + gamma * y_max * Q[1]
    b += float(np.sum(gamma / (2 * (r + 1)) * (A[r] ** 2 + 2 * Q[r + 1] * A[r])))
    b += float(np.sum(gamma / (2 * r) * X[r] ** 2))
    dc = np.asarray(dT_gain_max, dtype=float)
    dd = np.asarray(dT_loss_max, dtype=float)
    b += 0.5 * float(np.sum(np.maximum(dc ** 2, dd ** 2)))
    return float(b)
