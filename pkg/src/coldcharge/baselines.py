"""Comparison policies: separate thermostat + queue charging (B1), thermostat +
charge-at-peak (B2), and queue charging without heating (NoHeat)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .controller import ControllerParams, SlotContext, SlotProblem, charge_slope, solve_slot_detailed
from .model import EvSession, SlotDecision

BAND_LOW = 9.5
BAND_HIGH = 10.5


@dataclass(frozen=True)
class ThermostatState:
    heater_on: bool = False
    band_low: float = BAND_LOW
    band_high: float = BAND_HIGH

    def __post_init__(self):
        if not self.band_low < self.band_high:
            raise ValueError("band_low must be < band_high")


def bangbang_heat(state: ThermostatState, temp: float, heat_cap: float) -> Tuple[float, ThermostatState]:
    """On/off hysteresis: switch on below the band, off above it, hold inside."""
    if heat_cap < 0:
        raise ValueError("heat_cap must be >= 0")
    on = state.heater_on
    if temp < state.band_low:
        on = True
    elif temp > state.band_high:
        on = False
    new = state if on == state.heater_on else ThermostatState(on, state.band_low, state.band_high)
    return (heat_cap if on else 0.0), new


class _ThermostatMixin:
    def _init_thermostats(self, band_low: float, band_high: float):
        self.band = (band_low, band_high)
        self.thermostats: Dict[int, ThermostatState] = {}

    def _heat(self, ctx: SlotContext) -> Dict[int, float]:
        out = {}
        for ev in ctx.evs:
            st = self.thermostats.get(ev.id) or ThermostatState(False, *self.band)
            cap = min(ev.peak_heat, ev.params.p_total)
            out[ev.id], self.thermostats[ev.id] = bangbang_heat(st, ev.temperature, cap)
        return out


def queue_charging(ctx: SlotContext, cp: ControllerParams, heat: Dict[int, float]) -> Tuple[SlotDecision, list]:
    """Charging stage shared by B1 and NoHeat.

    The proposed per-slot problem with heating fixed in advance and the
    temperature-queue terms dropped; the fixed heating load consumes PV first
    and shrinks each EV's joint cap.
    """
    ids = tuple(ev.id for ev in ctx.evs)
    heat_load = float(sum(heat.values()))
    problem = SlotProblem(
        ev_ids=ids,
        w_c=np.array([charge_slope(ev, 0.0, ctx.queues, cp.gamma, ctx.dt, with_thermal=False) for ev in ctx.evs]),
        w_h=np.zeros(len(ids)),
        cap_c=np.array([min(ev.peak_charge, ev.demand_cap(ctx.dt)) for ev in ctx.evs]),
        cap_h=np.zeros(len(ids)),
        cap_joint=np.array([max(ev.params.p_total - heat[ev.id], 0.0) for ev in ctx.evs]),
        pv_free=max(ctx.pv_cap - heat_load, 0.0),
        grid_unit_cost=cp.v_weight * ctx.price * ctx.dt,
    )
    charged, order = solve_slot_detailed(problem)
    return SlotDecision.from_loads(charged.p_charge, heat, ctx.pv_cap), order


class B1Policy(_ThermostatMixin):
    name = "b1"

    def __init__(self, params: ControllerParams, band_low: float = BAND_LOW, band_high: float = BAND_HIGH):
        self.params = params
        self._init_thermostats(band_low, band_high)

    def theta(self, ev: EvSession) -> float:
        return 0.0

    def decide(self, ctx: SlotContext):
        heat = self._heat(ctx)
        decision, order = queue_charging(ctx, self.params, heat)
        return decision, {"allocation": order}


class B2Policy(_ThermostatMixin):
    name = "b2"

    def __init__(self, band_low: float = BAND_LOW, band_high: float = BAND_HIGH):
        self._init_thermostats(band_low, band_high)

    def theta(self, ev: EvSession) -> float:
        return 0.0

    def decide(self, ctx: SlotContext):
        heat = self._heat(ctx)
        charge = {
            ev.id: max(0.0, min(ev.peak_charge, ev.params.p_total - heat[ev.id], ev.demand_cap(ctx.dt)))
            for ev in ctx.evs
        }
        return SlotDecision.from_loads(charge, heat, ctx.pv_cap), {}


class NoHeatPolicy:
    name = "noheat"

    def __init__(self, params: ControllerParams):
        self.params = params

    def theta(self, ev: EvSession) -> float:
        return 0.0

    def decide(self, ctx: SlotContext):
        heat = {ev.id: 0.0 for ev in ctx.evs}
        decision, order = queue_charging(ctx, self.params, heat)
        return decision, {"allocation": order}
