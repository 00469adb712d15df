import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coldcharge import thermal
from coldcharge.model import ThermalParams
from coldcharge.validation import decay_crossing_slot


def test_decay_loss_at_minus_ten(params):
    # K = ln((T0 - Tl)/(T0 - Tu)) / ln(1 - eta/q) with T0 = -10
    k = math.log(10.0 / 30.0) / math.log(1 - 0.048 / 0.72)
    assert thermal.decay_slots(params, -10.0) == pytest.approx(k, rel=1e-12)
    assert thermal.decay_loss(params, -10.0) == pytest.approx(20.0 / k, rel=1e-12)
    assert thermal.decay_loss(params, -10.0) == pytest.approx(1.2560, abs=1e-4)


def test_colder_means_faster_loss(params):
    losses = [thermal.decay_loss(params, a) for a in (-2.0, -10.0, -20.0, -30.0)]
    assert losses == sorted(losses)


@settings(max_examples=100, deadline=None)
@given(
    q=st.floats(0.3, 2.0), eta_frac=st.floats(0.01, 0.3),
    t_low=st.floats(-5, 5), width=st.floats(5, 30), below=st.floats(0.5, 40),
)
def test_loss_times_slots_is_band_width(q, eta_frac, t_low, width, below):
    p = ThermalParams(q=q, eta=eta_frac * q, t_low=t_low, t_high=t_low + width)
    amb = t_low - below
    k = thermal.decay_slots(p, amb)
    assert thermal.decay_loss(p, amb) * k == pytest.approx(width, abs=1e-9)
    # the exact cooling recursion crosses t_low within half a slot of K
    assert abs(decay_crossing_slot(p, amb) - k) <= 0.5


def test_exact_step_matches_closed_form(params):
    temp, amb = 15.0, -8.0
    for n in range(1, 40):
        temp = thermal.step_exact(temp, amb, 0.0, 0.0, params)
        assert temp - amb == pytest.approx(params.zeta ** n * (15.0 + 8.0), rel=1e-12)


def test_heat_gain_and_queue_step(params):
    gain = thermal.heat_gain(params, 4.0, 2.0)
    assert gain == pytest.approx((0.8 * 2.0 + 0.05 * 4.0) / 0.72)
    assert thermal.step_queue(5.0, 1.2, 4.0, 2.0, params) == pytest.approx(5.0 - 1.2 + gain)


def test_peak_rates(params):
    assert thermal.peak_charge_rate(params, 10.0) == pytest.approx(6.0)
    assert thermal.peak_heat_rate(params, 10.0) == pytest.approx(2.76)
    # clamped at zero far outside the band
    assert thermal.peak_charge_rate(params, -50.0) == 0.0
    assert thermal.peak_heat_rate(params, 200.0) == 0.0


def test_bounds_default(params):
    b = thermal.thermal_bounds(params, -15.0, -5.0)
    assert b.dT_gain_max == pytest.approx((0.8 * 3.0 + 0.05 * 7.2) / 0.72)
    assert b.dT_loss_max == pytest.approx(thermal.decay_loss(params, -15.0))
    assert b.dT_loss_min == pytest.approx(thermal.decay_loss(params, -5.0))
    assert b.dT_loss_min < b.dT_loss_max


def test_warm_ambient_raises(params):
    with pytest.raises(thermal.ClimateError):
        thermal.thermal_bounds(params, -5.0, 25.0)


def test_fallback_above_t_low_warns(params, caplog):
    thermal.decay_loss.cache_clear()
    with caplog.at_level(logging.WARNING, logger="coldcharge.thermal"):
        loss = thermal.decay_loss(params, 2.0)
    assert thermal.decay_slots(params, 2.0) is None
    assert loss == pytest.approx(0.048 / 0.72 * (10.0 - 2.0))
    assert "linearised" in caplog.text
    assert thermal.decay_loss(params, 15.0) == pytest.approx(0.0)


def test_slot_context(params):
    b = thermal.thermal_bounds(params, -12.0, -6.0)
    ctx = thermal.slot_context(params, -9.0, b)
    assert ctx.dT_loss == pytest.approx(thermal.decay_loss(params, -9.0))
    assert ctx.k_slots * ctx.dT_loss == pytest.approx(20.0)
    assert np.isclose(ctx.zeta, params.zeta)
