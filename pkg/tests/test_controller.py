import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmcsim.controller import (Controller, ControllerConfig, ControlState, PiGains, clamp_duties,
                               compensator_output, compute_dac, compute_ddc_pred, gvi_transfer,
                               outer_pi_step, predict_vdelta)
from mmcsim.params import (TABLE_I, OperatingPoint, ReferenceSet, default_references,
                           derive_equivalents, max_ac_duty)

D = derive_equivalents(TABLE_I)
REFS = default_references(TABLE_I)
TS = TABLE_I.t_sample
KI = 2 * math.pi * 1000


def test_pi_zero_error_holds_integral():
    s = ControlState(pi_integral=5.0)
    assert outer_pi_step(7500.0, 7500.0, PiGains(1.0, KI), s, TS) == 5.0
    assert s.pi_integral == 5.0


def test_pi_one_step_hand_value():
    s = ControlState()
    out = outer_pi_step(7510.0, 7500.0, PiGains(1.0, KI), s, 20e-6)
    assert out == pytest.approx(10 + 6283.185307 * 10 * 2e-5, rel=1e-9)
    assert out == pytest.approx(11.257, abs=5e-4)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(0.1, 10))
def test_pi_linear_in_kp(errors, kp):
    a, b = ControlState(), ControlState()
    for e in errors:
        ya = outer_pi_step(e, 0.0, PiGains(kp, KI), a, TS)
        yb = outer_pi_step(e, 0.0, PiGains(2 * kp, KI), b, TS)
    assert yb == pytest.approx(2 * ya, rel=1e-9, abs=1e-9)


def test_pi_saturation_flagged():
    s = ControlState()
    out = outer_pi_step(8000.0, 7500.0, PiGains(1.0, KI, limit=100.0), s, TS)
    assert out == 100.0 and s.pi_saturated


def test_pi_gain_validation():
    with pytest.raises(ValueError):
        PiGains(0.0, 1.0)


def test_predict_vdelta_hand_value():
    s = ControlState(prev_d_dc=0.8, prev_d_ac=0.5, i_ac=80.0, i_dc=83.3, v_delta=0.0)
    assert predict_vdelta(s, TABLE_I) == pytest.approx(0.4 * (64 - 41.65), rel=1e-12)
    assert predict_vdelta(s, TABLE_I) == pytest.approx(8.94)


def test_predict_vdelta_balanced_charge():
    s = ControlState(prev_d_dc=0.8, prev_d_ac=0.5, i_ac=50.0, i_dc=80.0, v_delta=12.0)
    assert predict_vdelta(s, TABLE_I) == pytest.approx(12.0)


def test_predict_vdelta_zero_sample_time():
    s = ControlState(prev_d_dc=0.8, prev_d_ac=0.5, i_ac=80.0, i_dc=83.3, v_delta=3.0)
    assert predict_vdelta(s, replace(TABLE_I, f_sample=1e30)) == pytest.approx(3.0)


def test_dac_fixed_point():
    d_fix = D.r_ac_eq * 80.0 / 7500.0
    s = ControlState(prev_d_ac=d_fix, i_ac=80.0, v_sigma=7500.0)
    assert compute_dac(s, 80.0, REFS, D, TS) == pytest.approx(d_fix, rel=1e-14)
    assert d_fix == pytest.approx(0.694, abs=1e-3)


def test_dac_zero_load_alternates_sign():
    d0 = replace(D, r_ac_eq=0.0)
    s = ControlState(prev_d_ac=0.3, i_ac=10.0, v_sigma=7500.0)
    assert compute_dac(s, 10.0, REFS, d0, TS) == pytest.approx(-0.3)


def test_ddc_lossless_fixed_point():
    d0 = replace(D, r_dc_eq=0.0)
    s = ControlState(prev_d_dc=6000 / 7500, i_dc=80.0, v_sigma=7500.0)
    assert compute_ddc_pred(s, 80.0, 0.0, 0.5, REFS, d0, 6000.0, TS) == pytest.approx(0.8, rel=1e-14)


def _eq8_exact(vdc, ldc, rdc, ts, vref, i_ref, i_k, d_k, v_k, dac_k, vd_k, dac_next, vd_next):
    """DC-loop prediction evaluated in exact rational arithmetic."""
    F = Fraction
    num = (2 * F(vdc) + F(dac_next) * F(vd_next) - 2 * F(ldc) * (F(i_ref) - F(i_k)) / F(ts)
           - F(rdc) * (F(i_ref) + F(i_k)) - F(d_k) * F(v_k) + F(dac_k) * F(vd_k))
    return num / F(vref)


def test_ddc_reference_step_matches_exact_oracle():
    s = ControlState(prev_d_dc=0.8, prev_d_ac=0.694, i_dc=80.0, v_sigma=7490.0, v_delta=4.0)
    vd_next = predict_vdelta(ControlState(prev_d_dc=0.8, prev_d_ac=0.694, i_ac=80.0, i_dc=80.0, v_delta=4.0), TABLE_I)
    got = compute_ddc_pred(s, 85.0, vd_next, -0.694, REFS, D, 6000.0, TS)
    want = _eq8_exact(6000.0, D.l_dc_eq, D.r_dc_eq, TS, 7500.0, 85.0, 80.0, 0.8, 7490.0, 0.694, 4.0, -0.694, vd_next)
    assert got == pytest.approx(float(want), rel=1e-14)
    # frozen from the exact evaluation
    assert got == pytest.approx(0.7913447936, abs=1e-9)


def _closure_ac(rng):
    i_k = rng.uniform(-150, 150)
    i_ref = rng.choice([-1, 1]) * rng.uniform(1, 150)
    v_k = rng.uniform(6500, 8500)
    d_k = rng.uniform(-0.9, 0.9)
    s = ControlState(prev_d_ac=d_k, i_ac=i_k, v_sigma=v_k)
    d_next = compute_dac(s, i_ref, REFS, D, TS)
    # discretized AC loop (trapezoid, v_delta terms zeroed), v_sigma(k+1) = v_sigma*
    L, R = D.l_ac_eq, D.r_ac_eq
    i_next = ((L / TS - R / 2) * i_k + 0.5 * (d_next * REFS.v_sigma_ref + d_k * v_k)) / (L / TS + R / 2)
    return abs(i_next - i_ref) / abs(i_ref)


def _closure_dc(rng):
    i_k = rng.uniform(0, 150)
    i_ref = rng.uniform(1, 150)
    v_k = rng.uniform(6500, 8500)
    vd_k = rng.uniform(-300, 300)
    d_k = rng.uniform(0.6, 1.0)
    dac_k = rng.uniform(-0.9, 0.9)
    dac_next = rng.uniform(-0.9, 0.9)
    vd_next = rng.uniform(-300, 300)
    s = ControlState(prev_d_dc=d_k, prev_d_ac=dac_k, i_dc=i_k, v_sigma=v_k, v_delta=vd_k)
    d_next = compute_ddc_pred(s, i_ref, vd_next, dac_next, REFS, D, 6000.0, TS)
    L, R, vdc, vs = D.l_dc_eq, D.r_dc_eq, 6000.0, REFS.v_sigma_ref
    rhs = 0.5 * ((vdc - d_next * vs + dac_next * vd_next) + (vdc - d_k * v_k + dac_k * vd_k))
    i_next = ((L / TS - R / 2) * i_k + rhs) / (L / TS + R / 2)
    return abs(i_next - i_ref) / abs(i_ref)


def test_deadbeat_closure_1000_states():
    rng = np.random.default_rng(12345)
    worst_ac = max(_closure_ac(rng) for _ in range(1000))
    worst_dc = max(_closure_dc(rng) for _ in range(1000))
    assert worst_ac < 1e-12 and worst_dc < 1e-12


def test_compensator_zero_at_midpoint():
    assert compensator_output(TABLE_I.period / 4, 0.694, 0.8, 80.0, 69.4, REFS, TABLE_I) == pytest.approx(0.0, abs=1e-18)


def test_compensator_hand_value():
    got = compensator_output(0.0, 0.694, 0.8, 80.0, 69.4, REFS, TABLE_I)
    want = 0.694 / 7500 * (-0.5) * 2e-4 * (64 - 0.694 * 69.4) / 5e-5
    assert got == pytest.approx(want, rel=1e-12)
    assert got == pytest.approx(-2.93e-3, abs=5e-6)


@given(st.floats(0, TABLE_I.period))
def test_compensator_zero_when_charge_balanced(t):
    assert compensator_output(t, 0.5, 0.8, 50.0, 80.0, REFS, TABLE_I) == pytest.approx(0.0, abs=1e-15)


@given(st.floats(1e-9, TABLE_I.period / 2 - 1e-9))
def test_compensator_is_odd_about_midpoint(t):
    a = compensator_output(t, 0.7, 0.8, 80.0, 70.0, REFS, TABLE_I)
    b = compensator_output(TABLE_I.period / 2 - t, 0.7, 0.8, 80.0, 70.0, REFS, TABLE_I)
    assert a == pytest.approx(-b, rel=1e-9, abs=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_clamp_always_feasible(d_dc, d_ac):
    dc, ac, _ = clamp_duties(d_dc, d_ac)
    for duty in ((dc - ac) / 2, (dc + ac) / 2):
        assert 0.0 <= duty <= 1.0


@given(st.floats(0, 2), st.floats(-1, 1))
def test_clamp_leaves_feasible_untouched(d_dc, frac):
    d_ac = frac * max_ac_duty(d_dc)
    assert clamp_duties(d_dc, d_ac) == (d_dc, d_ac, False)


OP = OperatingPoint(v_sigma_op=7500.0, d_dc_op=0.8, d_ac_op_mag=0.694, i_dc_op=69.4, i_ac_op=80.0)


def test_gvi_dc_gain():
    g = gvi_transfer(OP, TABLE_I, D, 0.0)
    assert g.real == pytest.approx(53.8, abs=0.05)


def test_gvi_degenerate_point():
    op = OperatingPoint(7500.0, 0.8, 0.0, 0.0, 0.0)
    with pytest.raises(ZeroDivisionError):
        gvi_transfer(op, TABLE_I, replace(D, r_dc_eq=0.0), 0.0)


def test_gvi_high_frequency_asymptote():
    V, Ddc, Dac, I = OP.v_sigma_op, OP.d_dc_op, OP.d_ac_op_mag, OP.i_dc_op
    R, L, Rd, Ld, C = D.r_ac_eq, D.l_ac_eq, D.r_dc_eq, D.l_dc_eq, D.c_eq
    a = I * Ddc * R + V * Dac ** 2
    b = I * Rd * R - V * Ddc * R
    k0 = (V * Ddc * R - I * Rd * R) / a
    limit = k0 * (I * Ld * L / b) / (V * L * C / a)
    g = gvi_transfer(OP, TABLE_I, D, 1j * 2 * math.pi * 1e12)
    assert g == pytest.approx(limit, rel=1e-5)


def test_gvi_capacitance_option():
    eq = gvi_transfer(OP, TABLE_I, D, 1j * 1000.0)
    cell = gvi_transfer(OP, TABLE_I, D, 1j * 1000.0, capacitance="cell")
    assert eq != cell
    with pytest.raises(ValueError):
        gvi_transfer(OP, TABLE_I, D, 0.0, capacitance="arm")


def _controller():
    d_fix = D.r_ac_eq * 80.0 / 7500.0
    i_dc = 80.0
    d_dc = (6000.0 - D.r_dc_eq * i_dc) / 7500.0
    refs = ReferenceSet(7500.0, 80.0 * 65.0, 80.0, i_dc, 6000.0 * i_dc)
    c = Controller(TABLE_I, D, refs, ControllerConfig(PiGains(1.0, KI)), 20, (d_dc, d_fix), (i_dc, 80.0))
    return c, d_dc, d_fix


def test_controller_steady_state_composes_fixed_points():
    c, d_dc, d_fix = _controller()
    c.enable()
    c.compensator = False
    c.state.prev_d_ac = d_fix
    out = c.sample(0.0, 1.0, (80.0, 80.0, 7500.0, 0.0), 6000.0)
    assert out[0] == pytest.approx(d_dc, rel=1e-12)
    assert out[1] == pytest.approx(d_fix, rel=1e-12)
    assert c.compensation(0.0) == 0.0


def test_bumpless_enable_presets_integrator():
    c, _, _ = _controller()
    c.enable()
    assert c.state.pi_integral == 80.0
