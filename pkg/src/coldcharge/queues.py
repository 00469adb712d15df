"""Queue bookkeeping for the online controller.

Three families of backlogs are tracked:

* ``q_by_r[r]``: unmet charging energy (kWh) of all plugged-in EVs whose
  remaining parking time is ``r`` slots, ``1 <= r <= R``. Every slot the
  whole vector shifts down by one index after service.
* ``y_debt``: energy that reached its deadline unserved.
* ``h_by_ev[i]``: battery temperature of EV ``i`` minus its offset ``theta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from .model import EvSession, SlotDecision

TOL = 1e-9


class DuplicateEvError(ValueError):
    pass


class UnknownEvError(KeyError):
    pass


@dataclass
class QueueState:
    r_max: int
    q_by_r: np.ndarray = None  # index r in 1..r_max; slot 0 unused
    y_debt: float = 0.0
    h_by_ev: Dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")
        if self.q_by_r is None:
            self.q_by_r = np.zeros(self.r_max + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.r_max + 1)

    @property
    def total_q(self) -> float:
        return float(self.q_by_r[1:].sum())

    def snapshot(self) -> dict:
        nz = {int(r): float(v) for r, v in enumerate(self.q_by_r) if r > 0 and v != 0.0}
        return {"q_by_r": nz, "y_debt": self.y_debt, "h_by_ev": dict(self.h_by_ev)}


def admit_arrivals(
    state: QueueState, arrivals: Iterable[Tuple[EvSession, float]], t: int
) -> np.ndarray:
    """Register EVs that arrive during slot ``t`` and become available at ``t + 1``.

    Returns the new-demand vector ``a_by_r`` (indexed by remaining time at
    ``t + 1``) to be passed to :func:`advance`. The virtual temperature
    queue of each arrival starts at ``t_initial - theta``.
    """
    a = state.zeros()
    for ev, theta in arrivals:
        if ev.id in state.h_by_ev:
            raise DuplicateEvError(f"EV {ev.id} is already present")
        r = ev.t_depart - (t + 1)
        if not 1 <= r <= state.r_max:
            raise ValueError(f"EV {ev.id}: remaining time {r} outside [1, {state.r_max}]")
        a[r] += ev.demand
        state.h_by_ev[ev.id] = ev.t_initial - theta
    return a


def advance(state: QueueState, x_by_r: np.ndarray, a_by_r: np.ndarray) -> QueueState:
    """Shift demand queues one slot: Q'[r-1] = max(Q[r] - x[r], 0) + a[r-1].

    Q'[R] receives only new arrivals. Q[1] is not carried over; it must be
    settled against the debt queue first (see :func:`debt_update`).
    """
    if np.any(x_by_r < 0):
        raise ValueError("negative service")
    q = state.q_by_r
    served = np.maximum(q[2:] - x_by_r[2:], 0.0)
    new = a_by_r.astype(float).copy()
    new[0] = 0.0
    new[1:-1] += served
    state.q_by_r = new
    return state


def debt_update(state: QueueState, q1: float, x1: float) -> QueueState:
    if x1 > q1 + TOL:
        raise ValueError(f"service {x1} exceeds expiring demand {q1}")
    state.y_debt = state.y_debt + q1 - x1
    return state


def settle_slot(state: QueueState, x_by_r: np.ndarray, a_by_r: np.ndarray) -> QueueState:
    """End-of-slot update: expire Q[1] into the debt queue, then shift."""
    debt_update(state, float(state.q_by_r[1]), float(x_by_r[1]))
    return advance(state, x_by_r, a_by_r)


def temp_queue_update(state: QueueState, ev_id: int, dT_loss: float, dT_gain: float) -> QueueState:
    try:
        h = state.h_by_ev[ev_id]
    except KeyError:
        raise UnknownEvError(ev_id) from None
    state.h_by_ev[ev_id] = h - dT_loss + dT_gain
    return state


def remove_departures(state: QueueState, ev_ids: Iterable[int]) -> QueueState:
    for i in ev_ids:
        state.h_by_ev.pop(i, None)
    return state


def x_from_decisions(
    decision: SlotDecision,
    r_by_ev: Mapping[int, int],
    delta_c: Mapping[int, float] | float,
    dt_hours: float,
    r_max: int,
) -> np.ndarray:
    """Energy delivered into each remaining-time group: sum of delta_c * p_c * dt."""
    x = np.zeros(r_max + 1)
    for ev_id, r in r_by_ev.items():
        eff = delta_c[ev_id] if isinstance(delta_c, Mapping) else delta_c
        x[r] += eff * decision.p_charge.get(ev_id, 0.0) * dt_hours
    return x
