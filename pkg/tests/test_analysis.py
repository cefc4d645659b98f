import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmcsim.analysis import (AnalysisError, block_average, dft_component, harmonic_report,
                             model_agreement, moving_average, small_signal_probe,
                             transient_metrics)
from mmcsim.controller import gvi_transfer
from mmcsim.engine import COLUMNS, Trajectory
from mmcsim.params import TABLE_I, default_references, derive_equivalents, steady_state_operating_point

F_AC = 2500.0
DT = 1e-6


def _traj(fn, n_periods=12, events=()):
    t = np.arange(int(round(n_periods / F_AC / DT)) + 1) * DT
    data = np.zeros((len(t), len(COLUMNS)))
    data[:, 0] = t
    data[:, 1] = fn(t)
    return Trajectory(data, DT, events=list(events))


def test_dft_cosine_amplitude():
    t = np.arange(400) * DT
    x = 3.0 * np.cos(2 * math.pi * 5000 * t + 0.4)
    c = dft_component(x, DT, 5000.0, period=1 / F_AC)
    assert abs(c) == pytest.approx(3.0, rel=1e-12)
    assert np.angle(c) == pytest.approx(0.4, abs=1e-12)


def test_dft_constant():
    assert dft_component(np.full(400, 7.0), DT, 0.0).real == pytest.approx(7.0)


@given(st.floats(0.1, 10), st.floats(0.1, 10))
def test_dft_two_tones_separate(a, b):
    t = np.arange(400) * DT
    x = a * np.cos(2 * math.pi * 5000 * t) + b * np.sin(2 * math.pi * 10000 * t)
    assert abs(dft_component(x, DT, 5000.0)) == pytest.approx(a, rel=1e-9)
    assert abs(dft_component(x, DT, 10000.0)) == pytest.approx(b, rel=1e-9)


def test_dft_rejects_fractional_window():
    with pytest.raises(AnalysisError):
        dft_component(np.ones(401), DT, 5000.0, period=1 / F_AC)


def test_harmonic_report_synthetic():
    tr = _traj(lambda t: 100 + 20 * np.cos(2 * 2 * math.pi * F_AC * t))
    rep = harmonic_report(tr, F_AC)
    assert rep.h2_pct == pytest.approx(20.0, abs=1e-9)
    assert rep.h4_pct == pytest.approx(0.0, abs=1e-9)
    assert rep.dc_component == pytest.approx(100.0)
    assert rep.resolution == pytest.approx(F_AC / 10)


def test_harmonic_window_rejects_event():
    tr = _traj(lambda t: 100 + 0 * t, events=[(8 / F_AC, "set_power_demand", (1.0,))])
    with pytest.raises(AnalysisError, match="set_power_demand"):
        harmonic_report(tr, F_AC)


def test_harmonic_window_too_short():
    with pytest.raises(AnalysisError):
        harmonic_report(_traj(lambda t: 1 + 0 * t, n_periods=5), F_AC)


def test_transient_first_order_no_overshoot():
    t = np.linspace(0, 10e-3, 10001)
    y = np.where(t < 1e-3, 0.0, 1 - np.exp(-(t - 1e-3) / 2e-4))
    rep = transient_metrics(t, 10 + y, [(0.0, 10.0), (1e-3, 11.0)], 5.0, 1 / F_AC)
    assert rep.overshoot_pct == 0.0
    assert rep.settling_periods < 3


def test_transient_second_order_overshoot():
    z, wn = 0.5, 2 * math.pi * 1000
    t = np.linspace(0, 20e-3, 200001)
    wd = wn * math.sqrt(1 - z * z)
    y = 1 - np.exp(-z * wn * t) * (np.cos(wd * t) + z / math.sqrt(1 - z * z) * np.sin(wd * t))
    rep = transient_metrics(t, y, [(0.0, 0.0), (0.0 + 1e-12, 1.0)], 2.0, 1e-3)
    assert rep.overshoot_pct == pytest.approx(16.3, abs=0.2)
    assert math.isfinite(rep.settling_periods)


def test_transient_regulated_quantity_counts_both_sides():
    t = np.linspace(0, 1, 101)
    y = np.where(t < 0.5, 100.0, 99.0)
    rep = transient_metrics(t, y, [(0.0, 0.0), (0.5, 1.0)], 5.0, 0.1, target=100.0, direction=0)
    assert rep.overshoot_pct == pytest.approx(1.0)


def test_transient_needs_single_step():
    with pytest.raises(AnalysisError):
        transient_metrics([0, 1], [0, 0], [(0, 1), (0.5, 2), (0.7, 3)], 5, 1)


def test_model_agreement_identical_is_zero():
    a = _traj(lambda t: 80 + np.sin(t * 1e4))
    refs = default_references(TABLE_I)
    out = model_agreement(a, a, TABLE_I, refs)
    assert all(v["rms_pct"] == 0 and v["peak_pct"] == 0 for v in out.values())


def test_model_agreement_time_base_mismatch():
    refs = default_references(TABLE_I)
    with pytest.raises(AnalysisError):
        model_agreement(_traj(np.sin), _traj(np.sin, n_periods=11), TABLE_I, refs)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.integers(1, 10))
def test_moving_average_matches_naive(xs, n):
    got = moving_average(xs, n)
    want = [np.mean(xs[max(0, i + 1 - n):i + 1]) for i in range(len(xs))]
    assert np.allclose(got, want, rtol=1e-9, atol=1e-9)


def test_block_average_drops_tail():
    assert list(block_average(np.arange(7.0), 3)) == [1.0, 4.0]


REFS = default_references(TABLE_I)
OP = steady_state_operating_point(TABLE_I, REFS)


@settings(deadline=None, max_examples=1)
@given(st.just(200.0))
def test_probe_linear_in_eps(f):
    a = small_signal_probe(TABLE_I, OP, f, eps_frac=1e-3)
    b = small_signal_probe(TABLE_I, OP, f, eps_frac=2e-3)
    assert abs(b - a) / abs(a) < 1e-3


def test_probe_dc_limit():
    g0 = gvi_transfer(OP, TABLE_I, derive_equivalents(TABLE_I), 0.0)
    pr = small_signal_probe(TABLE_I, OP, 10.0)
    assert abs(20 * math.log10(abs(pr) / abs(g0))) < 1.0


def test_probe_finite_at_f_ac():
    assert math.isfinite(abs(small_signal_probe(TABLE_I, OP, F_AC)))
