"""Outer PI, deadbeat predictive law and feed-forward circulating-energy compensator."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class PiGains:
    k_p: float
    k_i: float
    limit: float = math.inf   # symmetric output saturation [A]

    def __post_init__(self):
        if not self.k_p > 0:
            raise ValueError("k_p must be positive")
        if not self.k_i >= 0:
            raise ValueError("k_i must be non-negative")


@dataclass
class ControlState:
    pi_integral: float = 0.0   # integral term of the PI output [A]
    prev_d_dc: float = 0.0
    prev_d_ac: float = 0.0
    i_dc: float = 0.0
    i_ac: float = 0.0
    v_sigma: float = 0.0
    v_delta: float = 0.0
    I_dc: float = 0.0
    I_ac: float = 0.0
    t_sample: float = 0.0
    pi_saturated: bool = False

    def sample(self, t, i_dc, i_ac, v_sigma, v_delta):
        self.t_sample = t
        self.i_dc = i_dc
        self.i_ac = i_ac
        self.v_sigma = v_sigma
        self.v_delta = v_delta


def outer_pi_step(v_sigma_ref, v_sigma_meas, gains, state, dt):
    """PI with rectangular integration; returns i_dc* and updates the integrator."""
    e = v_sigma_ref - v_sigma_meas
    state.pi_integral += gains.k_p * gains.k_i * e * dt
    out = gains.k_p * e + state.pi_integral
    state.pi_saturated = abs(out) > gains.limit
    if state.pi_saturated:
        out = math.copysign(gains.limit, out)
    return out


def predict_vdelta(state, p):
    k = p.n_cells * p.t_sample / (4.0 * p.c_cell)
    return k * (state.prev_d_dc * state.i_ac - state.prev_d_ac * state.i_dc) + state.v_delta


def compute_dac(state, i_ac_ref, refs, d, T_s):
    return (2.0 * d.l_ac_eq * (i_ac_ref - state.i_ac) / T_s
            + d.r_ac_eq * (i_ac_ref + state.i_ac)
            - state.prev_d_ac * state.v_sigma) / refs.v_sigma_ref


def compute_ddc_pred(state, i_dc_ref, v_delta_pred, d_ac_next, refs, d, v_dc, T_s):
    return (2.0 * v_dc + d_ac_next * v_delta_pred
            - 2.0 * d.l_dc_eq * (i_dc_ref - state.i_dc) / T_s
            - d.r_dc_eq * (i_dc_ref + state.i_dc)
            - state.prev_d_dc * state.v_sigma
            + state.prev_d_ac * state.v_delta) / refs.v_sigma_ref


def compensator_output(t, d_ac_pred, d_dc_pred, I_ac, I_dc, refs, p):
    """Triangular d_dc correction; ``t`` is time since the last square-wave flip."""
    half = 0.5 * p.period
    t = t % half
    dac = abs(d_ac_pred)
    c_eq = 4.0 * p.c_cell / p.n_cells
    slope = (d_dc_pred * I_ac - dac * I_dc) / c_eq
    return dac / refs.v_sigma_ref * (2.0 * t / p.period - 0.5) * half * slope


def vdelta_swing(d_ac_pred, d_dc_pred, I_ac, I_dc, p):
    """Half-period change of v_delta implied by the averaged charge balance."""
    c_eq = 4.0 * p.c_cell / p.n_cells
    return 0.5 * p.period * (d_dc_pred * I_ac - abs(d_ac_pred) * I_dc) / c_eq


def clamp_duties(d_dc, d_ac):
    """Map to feasible arm duties, keeping d_dc and shrinking |d_ac| first."""
    dc = min(max(d_dc, 0.0), 2.0)
    lim = min(dc, 2.0 - dc)
    ac = min(max(d_ac, -lim), lim)
    return dc, ac, (dc != d_dc or ac != d_ac)


def gvi_transfer(op, p, d, s, capacitance="equivalent"):
    """Capacitor-voltage-sum response to the DC current reference.

    ``capacitance`` selects C_eq ("equivalent") or the cell value ("cell").
    """
    if capacitance == "equivalent":
        C = d.c_eq
    elif capacitance == "cell":
        C = p.c_cell
    else:
        raise ValueError(f"unknown capacitance option {capacitance!r}")
    V, Ddc, Dac = op.v_sigma_op, op.d_dc_op, op.d_ac_op_mag
    I = op.i_dc_op
    R, L = d.r_ac_eq, d.l_ac_eq
    Rd, Ld = d.r_dc_eq, d.l_dc_eq
    a = I * Ddc * R + V * Dac * Dac
    b = I * Rd * R - V * Ddc * R
    if a == 0 or b == 0:
        raise ZeroDivisionError(f"degenerate operating point at s={s!r}")
    gain = (V * Ddc * R - I * Rd * R) / a
    num = s * s * I * Ld * L / b + s * (I * (R * Ld + Rd * L) - V * Ddc * L) / b + 1.0
    den = s * s * V * L * C / a + s * (V * R * C + I * Ddc * L) / a + 1.0
    if den == 0:
        raise ZeroDivisionError(f"pole hit at s={s!r} (f={abs(s) / (2 * math.pi):.6g} Hz)")
    return gain * num / den


@dataclass
class ControllerConfig:
    gains: PiGains
    vdelta_feedforward: bool = False
    average_source: str = "measured"   # or "reference"
    bumpless: bool = True


class _Window:
    """One-AC-period moving window sampled every plant step."""

    def __init__(self, n, fill):
        self.buf = np.full(n, float(fill))
        self.i = 0

    def push(self, x):
        self.buf[self.i] = x
        self.i = (self.i + 1) % len(self.buf)

    def mean(self):
        return float(np.mean(self.buf))


class Controller:
    """Sample-and-hold control stack driven by the simulation engine.

    ``sample`` runs at T_s instants, ``step_output`` every plant step.
    """

    def __init__(self, params, derived, refs, config, n_window, initial_duties, initial_avgs):
        self.p = params
        self.d = derived
        self.refs = refs
        self.cfg = config
        self.state = ControlState()
        self.enabled = False
        self.compensator = True
        d_dc0, d_ac0 = initial_duties
        I_dc0, I_ac0 = initial_avgs
        self.state.prev_d_dc = d_dc0
        self.state.prev_d_ac = d_ac0
        self.state.I_dc = I_dc0
        self.state.I_ac = I_ac0
        self.w_idc = _Window(n_window, I_dc0)
        self.w_iac = _Window(n_window, I_ac0)
        self.w_ddc = _Window(n_window, d_dc0)
        self.w_dac = _Window(n_window, abs(d_ac0))
        self.D_dc = d_dc0
        self.D_ac = abs(d_ac0)
        self.d_dc_hold = d_dc0
        self.d_ac_hold = d_ac0
        self.i_dc_ref = 0.0
        self.i_ac_ref = 0.0

    def enable(self):
        if not self.enabled and self.cfg.bumpless:
            self.state.pi_integral = self.state.I_dc
        self.enabled = True

    def sample(self, t, sign, meas, v_dc):
        """Closed-loop computation at a sampling instant; returns held (d_dc_pred, d_ac)."""
        st = self.state
        st.sample(t, *meas)
        refs = self.refs
        self.i_dc_ref = outer_pi_step(refs.v_sigma_ref, st.v_sigma, self.cfg.gains, st, self.p.t_sample)
        self.i_ac_ref = refs.i_ac_ref_mag * sign
        d_ac_new = compute_dac(st, self.i_ac_ref, refs, self.d, self.p.t_sample)
        if self.cfg.vdelta_feedforward:
            vd_pred = predict_vdelta(st, self.p)
            d_dc_new = compute_ddc_pred(st, self.i_dc_ref, vd_pred, d_ac_new, refs, self.d, v_dc, self.p.t_sample)
        else:
            st0 = ControlState(prev_d_dc=st.prev_d_dc, prev_d_ac=0.0, i_dc=st.i_dc, v_sigma=st.v_sigma)
            d_dc_new = compute_ddc_pred(st0, self.i_dc_ref, 0.0, 0.0, refs, self.d, v_dc, self.p.t_sample)
        # interval average of the endpoint duties, remembered as d_dc(k)
        self.d_dc_hold = 0.5 * (st.prev_d_dc + d_dc_new)
        st.prev_d_dc = self.d_dc_hold
        self.d_ac_hold = d_ac_new
        return self.d_dc_hold, self.d_ac_hold

    def open_loop_sample(self, t, meas, d_dc, d_ac):
        self.state.sample(t, *meas)
        self.d_dc_hold = d_dc
        self.d_ac_hold = d_ac
        self.state.prev_d_dc = d_dc

    def compensation(self, t_in_half):
        if not (self.enabled and self.compensator):
            return 0.0
        if self.cfg.average_source == "reference":
            I_dc, I_ac = self.i_dc_ref, self.refs.i_ac_ref_mag
        else:
            I_dc, I_ac = self.state.I_dc, self.state.I_ac
        return compensator_output(t_in_half, self.D_ac, self.D_dc, I_ac, I_dc, self.refs, self.p)

    def applied(self, d_ac_applied, is_sample):
        if is_sample:
            self.state.prev_d_ac = d_ac_applied

    def observe(self, i_dc, i_ac, d_ac_applied, is_sample):
        """Push post-step measurements into the one-period windows."""
        self.w_idc.push(i_dc)
        self.w_iac.push(abs(i_ac))
        self.w_ddc.push(self.d_dc_hold)
        self.w_dac.push(abs(d_ac_applied))
        if is_sample:
            self.state.I_dc = self.w_idc.mean()
            self.state.I_ac = self.w_iac.mean()
            self.D_dc = self.w_ddc.mean()
            self.D_ac = self.w_dac.mean()
