"""Battery thermal physics.

Two temperature updates are provided. ``step_exact`` is the lumped Newton
cooling model; ``step_queue`` is its queue form, in which the loss to ambient
over one slot is the constant ``decay_loss`` obtained by spreading the
free-cooling time from ``t_high`` down to ``t_low`` evenly over the slots it
takes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

from .model import ThermalParams

log = logging.getLogger(__name__)


class ClimateError(ValueError):
    """The scenario is outside the cold-climate regime the controller assumes."""


@dataclass(frozen=True)
class ThermalBounds:
    dT_loss_min: float
    dT_loss_max: float
    dT_gain_max: float


@dataclass(frozen=True)
class ThermalSlotContext:
    zeta: float
    k_slots: float | None  # None on the fallback branch
    dT_loss: float
    dT_gain_max: float
    dT_loss_max: float
    dT_loss_min: float


def decay_slots(params: ThermalParams, ambient: float) -> float | None:
    """Real-valued number of free-cooling slots from t_high down to t_low.

    Only defined when ambient < t_low; returns None otherwise.
    """
    if not ambient < params.t_low:
        return None
    ratio = (ambient - params.t_low) / (ambient - params.t_high)
    return math.log(ratio) / math.log(params.zeta)


@lru_cache(maxsize=4096)
def decay_loss(params: ThermalParams, ambient: float) -> float:
    """Per-slot temperature loss to ambient (degC/slot).

    Cached per (params, ambient), so the fallback warning fires once per value.
    """
    k = decay_slots(params, ambient)
    if k is not None:
        return (params.t_high - params.t_low) / k
    mid = 0.5 * (params.t_low + params.t_high)
    log.warning(
        "ambient %.3f >= t_low %.3f: using linearised cooling, feasibility premises may not hold",
        ambient, params.t_low,
    )
    return (params.eta / params.q) * max(0.0, mid - ambient)


def heat_gain(params: ThermalParams, p_c: float, p_h: float) -> float:
    """Temperature rise over one slot from heating and charging losses."""
    return (params.delta_h * p_h + (1.0 - params.delta_c) * p_c) / params.q


def step_exact(state_temp: float, ambient: float, p_c: float, p_h: float, params: ThermalParams) -> float:
    return state_temp + (
        -params.eta * (state_temp - ambient)
        + params.delta_h * p_h
        + (1.0 - params.delta_c) * p_c
    ) / params.q


def step_queue(state_temp: float, dT_loss: float, p_c: float, p_h: float, params: ThermalParams) -> float:
    return state_temp - dT_loss + heat_gain(params, p_c, p_h)


def peak_charge_rate(params: ThermalParams, temp: float) -> float:
    return max(0.0, params.p_c_base + params.beta_c * temp)


def peak_heat_rate(params: ThermalParams, temp: float) -> float:
    return max(0.0, params.p_h_base - params.beta_h * temp)


def thermal_bounds(params: ThermalParams, ambient_low: float, ambient_high: float) -> ThermalBounds:
    """Loss/gain extremes over the declared ambient range and the feasible band.

    Raises ClimateError when ambient_high >= t_high, i.e. the battery would
    not cool over part of its band.
    """
    if ambient_low > ambient_high:
        raise ValueError("ambient_low > ambient_high")
    if ambient_high >= params.t_high:
        raise ClimateError(
            f"ambient up to {ambient_high} degC reaches t_high={params.t_high} degC; "
            "the cooling model is undefined"
        )
    # Linear rate models: extremes sit at the band edges.
    heat_max = max(peak_heat_rate(params, params.t_low), peak_heat_rate(params, params.t_high))
    charge_max = max(peak_charge_rate(params, params.t_low), peak_charge_rate(params, params.t_high))
    gain = (params.delta_h * min(heat_max, params.p_total) + (1.0 - params.delta_c) * charge_max) / params.q
    return ThermalBounds(
        dT_loss_min=decay_loss(params, ambient_high),
        dT_loss_max=decay_loss(params, ambient_low),
        dT_gain_max=gain,
    )


def slot_context(params: ThermalParams, ambient: float, bounds: ThermalBounds) -> ThermalSlotContext:
    return ThermalSlotContext(
        zeta=params.zeta,
        k_slots=decay_slots(params, ambient),
        dT_loss=decay_loss(params, ambient),
        dT_gain_max=bounds.dT_gain_max,
        dT_loss_max=bounds.dT_loss_max,
        dT_loss_min=bounds.dT_loss_min,
    )
