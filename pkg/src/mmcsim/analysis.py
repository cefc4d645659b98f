"""Harmonic, transient and model-agreement metrics plus the small-signal probe."""

import math
from dataclasses import dataclass

import numba
import numpy as np


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class HarmonicReport:
    dc_component: float
    h2_pct: float
    h4_pct: float
    resolution: float
    window: tuple

    def component_at(self, k):
        return {2: self.h2_pct, 4: self.h4_pct}[k]

    def as_dict(self):
        return {"dc_component_a": self.dc_component, "h2_pct": self.h2_pct,
                "h4_pct": self.h4_pct, "resolution_hz": self.resolution,
                "window_s": list(self.window)}


@dataclass(frozen=True)
class TransientReport:
    overshoot_pct: float
    settling_periods: float
    band_pct: float

    def as_dict(self):
        return {"overshoot_pct": self.overshoot_pct, "settling_periods": self.settling_periods,
                "band_pct": self.band_pct}


def _integer_cycles(n, dt, f, what):
    cycles = n * dt * f
    if abs(cycles - round(cycles)) > 1e-6 * max(1.0, cycles) or round(cycles) < 1:
        raise AnalysisError(f"window of {n} samples is not an integer number of {what} ({cycles:.6g})")


def dft_component(x, dt, f, period=None):
    """Single-bin projection of a uniformly sampled series.

    Returns the complex amplitude at ``f`` (mean for f = 0). The window must
    hold an integer number of cycles of ``f`` and, if given, of ``period``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if period is not None:
        _integer_cycles(n, dt, 1.0 / period, "AC periods")
    if f == 0:
        return complex(np.mean(x))
    _integer_cycles(n, dt, f, "cycles of f")
    t = np.arange(n) * dt
    return complex(2.0 * np.mean(x * np.exp(-2j * math.pi * f * t)))


def _window_mask(traj, t0, t1):
    m = traj.window(t0, t1)
    if not m.any():
        raise AnalysisError(f"empty window [{t0}, {t1})")
    return m


def check_window_events(traj, t0, t1, tol=None):
    tol = 1e-3 * traj.dt if tol is None else tol
    for t_ev, kind, _ in traj.events:
        if t0 - tol <= t_ev < t1 - tol:
            raise AnalysisError(f"event {kind} at t={t_ev:.6g} s falls inside window [{t0:.6g}, {t1:.6g})")


def last_periods_window(traj, f_ac, n_periods=10, t_end=None):
    T = 1.0 / f_ac
    t_end = traj.t[-1] if t_end is None else t_end
    # align to whole periods counted from t = 0
    k_end = math.floor(t_end / T + 1e-9)
    if k_end < n_periods:
        raise AnalysisError(f"trajectory shorter than {n_periods} AC periods")
    return ((k_end - n_periods) * T, k_end * T)


def harmonic_report(traj, f_ac, signal="i_dc", window=None, n_periods=10):
    """2nd and 4th harmonic of ``signal`` as percent of its DC value."""
    if window is None:
        window = last_periods_window(traj, f_ac, n_periods)
    t0, t1 = window
    check_window_events(traj, t0, t1)
    m = _window_mask(traj, t0, t1)
    x = traj[signal][m]
    T = 1.0 / f_ac
    dc = dft_component(x, traj.dt, 0.0, period=T).real
    if dc == 0:
        raise AnalysisError("zero DC component")
    h = [abs(dft_component(x, traj.dt, k * f_ac)) / abs(dc) * 100.0 for k in (2, 4)]
    return HarmonicReport(dc, h[0], h[1], 1.0 / (len(x) * traj.dt), (t0, t1))


def moving_average(x, n):
    """Trailing moving average over ``n`` samples (shorter at the start)."""
    x = np.asarray(x, dtype=float)
    c = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - n, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def block_average(x, n):
    x = np.asarray(x, dtype=float)
    m = (len(x) // n) * n
    return x[:m].reshape(-1, n).mean(axis=1)


def single_step(ref_schedule):
    """Time of the only change in a piecewise-constant (t, value) schedule."""
    steps = [t for (t, v), (_, v0) in zip(ref_schedule[1:], ref_schedule[:-1]) if v != v0]
    if len(steps) != 1:
        raise AnalysisError(f"expected exactly one reference step, found {len(steps)}")
    return steps[0]


def transient_metrics(t, y, ref_schedule, band_pct, period, target=None, t_stop=None,
                      direction=None):
    """Overshoot and settling after the single step in ``ref_schedule``.

    ``target`` is the value the signal should settle to (defaults to the
    final reference value). Overshoot is the largest excursion past the
    target in the step direction, as a percentage of the target; with
    ``direction=0`` (a regulated quantity whose target does not move) it is
    the largest deviation either way. Settling is the time after which the
    signal stays in the band.
    """
    t = np.asarray(t)
    y = np.asarray(y, dtype=float)
    t_step = single_step(ref_schedule)
    if target is None:
        target = ref_schedule[-1][1]
    if direction is None:
        direction = float(np.sign(ref_schedule[-1][1] - ref_schedule[0][1]))
    sel = t >= t_step
    if t_stop is not None:
        sel &= t < t_stop
    if not sel.any():
        raise AnalysisError("no samples after the step")
    ts, ys = t[sel], y[sel]
    dev = np.abs(ys - target) / abs(target) * 100.0
    if direction == 0:
        over = float(dev.max())
    else:
        over = max(0.0, float(np.max(direction * (ys - target))) / abs(target) * 100.0)
    outside = np.nonzero(dev > band_pct)[0]
    settle = 0.0 if len(outside) == 0 else (ts[outside[-1]] - t_step) / period
    if len(outside) and outside[-1] == len(ts) - 1:
        settle = math.inf
    return TransientReport(over, float(settle), band_pct)


AGREEMENT_VARS = ("i_dc", "i_ac", "v_sigma", "v_delta")


def model_agreement(traj_a, traj_b, params, refs, block=None):
    """Normalized RMS and peak deviation of T_sw block averages.

    Currents are normalized by rated values (P/V_dc and sqrt(P/R_ac)),
    voltages by v_sigma*.
    """
    if len(traj_a) != len(traj_b) or abs(traj_a.dt - traj_b.dt) > 1e-15:
        raise AnalysisError("trajectories do not share a time base")
    if not np.array_equal(traj_a.t, traj_b.t):
        raise AnalysisError("trajectories do not share a time base")
    ev_a = [(round(t / traj_a.dt), k, tuple(a)) for t, k, a in traj_a.events]
    ev_b = [(round(t / traj_b.dt), k, tuple(a)) for t, k, a in traj_b.events]
    if ev_a != ev_b:
        raise AnalysisError("trajectories come from different scenarios")
    if block is None:
        block = max(1, int(round(params.t_sw / traj_a.dt)))
    norms = {"i_dc": params.p_rated / params.v_dc,
             "i_ac": math.sqrt(params.p_rated / params.r_ac),
             "v_sigma": refs.v_sigma_ref, "v_delta": refs.v_sigma_ref}
    out = {}
    for name in AGREEMENT_VARS:
        a = block_average(traj_a[name][:-1], block)
        b = block_average(traj_b[name][:-1], block)
        diff = (a - b) / norms[name]
        out[name] = {"rms_pct": float(100.0 * np.sqrt(np.mean(diff ** 2))) if len(diff) else 0.0,
                     "peak_pct": float(100.0 * np.max(np.abs(diff))) if len(diff) else 0.0}
    return out


@numba.njit(cache=True)
def _probe_run(eps, f, dt, n_steps, n_half, d_ac_mag, v_src, i_dc0, rdc, ldc, rac, lac, ceq,
               with_vdelta, x0):
    vs = x0[0]
    vd = x0[1]
    ia = x0[2]
    out = np.empty(n_steps)
    w = 2.0 * np.pi * f
    k = np.empty(3)
    acc = np.empty(3)
    for n in range(n_steps):
        t = n * dt
        dac = d_ac_mag if (n // n_half) % 2 == 0 else -d_ac_mag
        acc[:] = 0.0
        for st in range(4):
            if st == 0:
                h = 0.0
            elif st == 3:
                h = dt
            else:
                h = 0.5 * dt
            a = vs + h * k[0] if st > 0 else vs
            b = vd + h * k[1] if st > 0 else vd
            c = ia + h * k[2] if st > 0 else ia
            tt = t + h
            idc = i_dc0 + eps * np.sin(w * tt)
            didc = eps * w * np.cos(w * tt)
            bb = b if with_vdelta else 0.0
            ddc = (v_src - rdc * idc - ldc * didc + dac * bb) / a
            k[0] = (ddc * idc - dac * c) / ceq
            k[1] = (ddc * c - dac * idc) / ceq if with_vdelta else 0.0
            k[2] = (-ddc * bb + dac * a - rac * c) / lac
            wt = 1.0 if (st == 0 or st == 3) else 2.0
            for i in range(3):
                acc[i] += wt * k[i]
        vs += dt / 6.0 * acc[0]
        vd += dt / 6.0 * acc[1]
        ia += dt / 6.0 * acc[2]
        out[n] = vs
    return out


def small_signal_probe(params, op, f, eps_frac=1e-3, cycles=20, settle=None,
                       with_vdelta=False, steps_per_period=400):
    """Numerical v_sigma/i_dc response of the reduced averaged model at ``f``.

    i_dc is imposed as I_dc + eps*sin(2*pi*f*t), d_dc follows from the DC-loop
    equation and d_ac is the fixed square wave. The response is the
    difference between perturbed and unperturbed runs projected at ``f``.
    """
    from .params import derive_equivalents
    d = derive_equivalents(params)
    T = params.period
    dt = T / steps_per_period
    n_half = steps_per_period // 2
    if settle is None:
        settle = max(0.05, 3.0 / f)
    n0 = int(round(settle / dt))
    nw = int(round(cycles / f / dt))
    eps = eps_frac * op.i_dc_op
    v_src = op.d_dc_op * op.v_sigma_op + d.r_dc_eq * op.i_dc_op
    x0 = np.array([op.v_sigma_op, 0.0, op.i_ac_op])
    args = (dt, n0 + nw, n_half, op.d_ac_op_mag, v_src, op.i_dc_op, d.r_dc_eq, d.l_dc_eq,
            d.r_ac_eq, d.l_ac_eq, d.c_eq, with_vdelta, x0)
    a = _probe_run(eps, f, *args)
    b = _probe_run(0.0, f, *args)
    y = (a - b)[n0:]
    if not np.all(np.isfinite(y)):
        raise AnalysisError(f"probe diverged at f={f:.6g} Hz")
    t = np.arange(n0, n0 + nw) * dt
    ph = np.exp(-2j * math.pi * f * t)
    u = eps * np.sin(2 * math.pi * f * t)
    half = nw // 2
    g1 = np.sum(y[:half] * ph[:half]) / np.sum(u[:half] * ph[:half])
    g2 = np.sum(y[half:] * ph[half:]) / np.sum(u[half:] * ph[half:])
    g = np.sum(y * ph) / np.sum(u * ph)
    if abs(g1 - g2) > 0.02 * abs(g):
        raise AnalysisError(f"probe response not settled at f={f:.6g} Hz "
                            f"(half-window gains {abs(g1):.4g} vs {abs(g2):.4g})")
    return complex(g)


def cell_spread(traj, arm, period, n_periods=None):
    """Per-AC-period maximum of (max - min) cell voltage within one arm."""
    v = traj.arm_cells(arm)
    spread = v.max(axis=1) - v.min(axis=1)
    out = per_period_max(spread, int(round(period / traj.dt)))
    return out if n_periods is None else out[-n_periods:]


def per_period_max(x, n):
    x = np.asarray(x)
    m = (len(x) // n) * n
    return x[:m].reshape(-1, n).max(axis=1)
