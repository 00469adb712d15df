"""Clairvoyant offline schedule.

Minimises grid purchase cost plus a quadratic penalty on missed departure
energy over the whole horizon, with full knowledge of arrivals, prices, PV
and ambient temperature. Battery energy and temperature are explicit state
variables tied to the controls by linear dynamics, so the program is a
sparse convex QP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import scipy.sparse as sp

from .. import thermal
from ..model import Scenario, SlotDecision
from .qp import INF, KktResiduals, solve_qp

TRUTH_MODELS = ("queue", "exact")


def default_alpha(scenario: Scenario) -> float:
    """Penalty weight ($/kWh^2) that dwarfs any single slot's energy price."""
    return 100.0 * scenario.price_cap * scenario.dt_hours


@dataclass
class OfflineSolution:
    p_charge: Dict[int, np.ndarray]  # per EV, indexed by slot within [t_arrive, t_depart)
    p_heat: Dict[int, np.ndarray]
    energy: Dict[int, np.ndarray]  # per EV, states at t_arrive .. t_depart
    temperature: Dict[int, np.ndarray]
    p_pv: np.ndarray
    p_grid: np.ndarray
    objective: float
    cost: float
    penalty: float
    residuals: KktResiduals
    iterations: int
    t_arrive: Dict[int, int] = field(default_factory=dict)

    def decision(self, t: int, pv_cap: float) -> SlotDecision:
        pc, ph = {}, {}
        for i, ta in self.t_arrive.items():
            k = t - ta
            if 0 <= k < len(self.p_charge[i]):
                pc[i] = float(self.p_charge[i][k])
                ph[i] = float(self.p_heat[i][k])
        return SlotDecision.from_loads(pc, ph, pv_cap)


class _Index:
    def __init__(self):
        self.n = 0

    def take(self, k: int) -> np.ndarray:
        out = np.arange(self.n, self.n + k)
        self.n += k
        return out


def offline_solve(
    scenario: Scenario,
    alpha: float | None = None,
    truth_model: str = "queue",
    max_evs: int = 60,
    **solver_opts,
) -> OfflineSolution:
    if truth_model not in TRUTH_MODELS:
        raise ValueError(f"truth_model must be one of {TRUTH_MODELS}")
    if len(scenario.sessions) > max_evs:
        raise ValueError(f"{len(scenario.sessions)} EVs exceeds the offline limit of {max_evs}")
    alpha = default_alpha(scenario) if alpha is None else alpha
    if not alpha > 0:
        raise ValueError("alpha must be > 0")
    T, dt = scenario.horizon, scenario.dt_hours

    idx = _Index()
    g = idx.take(T)
    evs = []
    for ev in scenario.sessions:
        k = ev.duration
        evs.append((ev, idx.take(k), idx.take(k), idx.take(k), idx.take(k), idx.take(1)))  # pc, ph, E, T, shortfall
    n = idx.n

    rows, cols, vals, lo, hi = [], [], [], [], []
    nrow = 0

    def add_row(coefs, lower, upper):
        nonlocal nrow
        for j, v in coefs:
            rows.append(nrow)
            cols.append(j)
            vals.append(v)
        lo.append(lower)
        hi.append(upper)
        nrow += 1

    q = np.zeros(n)
    p_diag = np.zeros(n)
    q[g] = scenario.price * dt
    for t in range(T):
        add_row([(g[t], 1.0)], 0.0, INF)

    load_terms: List[List] = [[] for _ in range(T)]
    for ev, pc, ph, E, Tm, dev in evs:
        p = ev.thermal
        gain_c = (1.0 - p.delta_c) / p.q
        gain_h = p.delta_h / p.q
        for k in range(ev.duration):
            t = ev.t_arrive + k
            load_terms[t] += [(pc[k], 1.0), (ph[k], 1.0)]
            # energy
            coefs = [(E[k], 1.0), (pc[k], -p.delta_c * dt)]
            rhs = 0.0
            if k == 0:
                rhs = ev.e_initial
            else:
                coefs.append((E[k - 1], -1.0))
            add_row(coefs, rhs, rhs)
            # temperature
            coefs = [(Tm[k], 1.0), (pc[k], -gain_c), (ph[k], -gain_h)]
            if truth_model == "queue":
                carry, rhs = 1.0, -thermal.decay_loss(p, float(scenario.ambient[t]))
            else:
                carry, rhs = p.zeta, p.eta / p.q * float(scenario.ambient[t])
            if k == 0:
                rhs += carry * ev.t_initial
            else:
                coefs.append((Tm[k - 1], -carry))
            add_row(coefs, rhs, rhs)
            add_row([(Tm[k], 1.0)], p.t_low, p.t_high)
            add_row([(E[k], 1.0)], -INF, ev.e_cap)
            # temperature-dependent peak rates, evaluated at the state entering slot t
            if k == 0:
                add_row([(pc[k], 1.0)], 0.0, max(thermal.peak_charge_rate(p, ev.t_initial), 0.0))
                add_row([(ph[k], 1.0)], 0.0, max(thermal.peak_heat_rate(p, ev.t_initial), 0.0))
            else:
                add_row([(pc[k], 1.0)], 0.0, INF)
                add_row([(ph[k], 1.0)], 0.0, INF)
                add_row([(pc[k], 1.0), (Tm[k - 1], -p.beta_c)], -INF, p.p_c_base)
                add_row([(ph[k], 1.0), (Tm[k - 1], p.beta_h)], -INF, p.p_h_base)
            add_row([(pc[k], 1.0), (ph[k], 1.0)], -INF, p.p_total)
        # departure shortfall as its own variable keeps the linear cost term free of the penalty
        add_row([(E[ev.duration - 1], 1.0), (dev[0], -1.0)], ev.e_depart, ev.e_depart)
        p_diag[dev[0]] = 2.0 * alpha
    for t in range(T):
        if load_terms[t]:
            add_row(load_terms[t] + [(g[t], -1.0)], -INF, float(scenario.pv_cap[t]))

    A = sp.csc_matrix((vals, (rows, cols)), shape=(nrow, n))
    P = sp.diags(p_diag).tocsc()
    res = solve_qp(P, q, A, np.array(lo), np.array(hi), **solver_opts)
    x = res.x

    sol_pc, sol_ph, sol_E, sol_T, arrive = {}, {}, {}, {}, {}
    load = np.zeros(T)
    penalty = 0.0
    for ev, pc, ph, E, Tm, dev in evs:
        sol_pc[ev.id] = np.maximum(x[pc], 0.0)
        sol_ph[ev.id] = np.maximum(x[ph], 0.0)
        sol_E[ev.id] = np.concatenate([[ev.e_initial], x[E]])
        sol_T[ev.id] = np.concatenate([[ev.t_initial], x[Tm]])
        arrive[ev.id] = ev.t_arrive
        load[ev.t_arrive:ev.t_depart] += sol_pc[ev.id] + sol_ph[ev.id]
        penalty += alpha * (x[E[-1]] - ev.e_depart) ** 2
    p_pv = np.minimum(load, scenario.pv_cap)
    p_grid = np.maximum(load - p_pv, 0.0)
    cost = float(np.sum(scenario.price * p_grid * dt))
    return OfflineSolution(
        p_charge=sol_pc, p_heat=sol_ph, energy=sol_E, temperature=sol_T,
        p_pv=p_pv, p_grid=p_grid, objective=res.objective, cost=cost,
        penalty=float(penalty), residuals=res.residuals, iterations=res.iterations,
        t_arrive=arrive,
    )
