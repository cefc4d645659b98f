"""Fixed-step simulation loop shared by the averaged and switched plants."""

import math
from dataclasses import dataclass, field

import numpy as np

from .averaged import AveragedPlant, AveragedState, periodic_steady_state, run_open_loop
from .controller import Controller, ControllerConfig, PiGains, clamp_duties
from .params import ac_current_for_power, derive_equivalents, grid_step, steps_per
from .switched import ARMS, SwitchedPlant, initial_switched_state

COLUMNS = ("t", "i_dc", "i_ac", "v_sigma", "v_delta", "d_dc_pred", "d_dc_comp",
           "d_dc_final", "d_ac", "i_ac_ref", "i_dc_ref", "v_sigma_ref")

EVENT_KINDS = ("enable_controller", "disable_compensator", "enable_compensator",
               "set_power_demand", "set_duties", "end")


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    args: tuple = ()


@dataclass
class Trajectory:
    """Uniformly sampled simulation record."""

    data: np.ndarray                 # (n, len(COLUMNS))
    dt: float
    cells: np.ndarray = None         # (n, 4N) or None
    n_cells: int = 0
    events: list = field(default_factory=list)
    clamp_log: list = field(default_factory=list)
    swap_log: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.data[:, COLUMNS.index(name)]

    @property
    def t(self):
        return self.data[:, 0]

    def __len__(self):
        return self.data.shape[0]

    def cell_columns(self):
        return [f"cell_{arm}_{n + 1}" for arm in ARMS for n in range(self.n_cells)]

    def arm_cells(self, arm):
        a = ARMS.index(arm)
        return self.cells[:, a * self.n_cells:(a + 1) * self.n_cells]

    def decimate(self, k):
        if k == 1:
            return self
        return Trajectory(self.data[::k].copy(), self.dt * k,
                          None if self.cells is None else self.cells[::k].copy(),
                          self.n_cells, list(self.events), list(self.clamp_log),
                          list(self.swap_log), dict(self.meta))

    def window(self, t0, t1):
        """Boolean mask for t0 <= t < t1 on the sample grid."""
        eps = 1e-3 * self.dt
        return (self.t >= t0 - eps) & (self.t < t1 - eps)


@dataclass
class RunSetup:
    """Everything the loop needs, already validated."""

    params: object
    refs: object
    gains: PiGains
    t_end: float
    dt: object                        # Fraction
    events: tuple = ()
    open_loop_duties: tuple = None    # (d_dc, |d_ac|)
    vdelta_feedforward: bool = False
    average_source: str = "measured"
    record_cells: bool = True
    sample_filter: bool = True        # average over T_sw/N before each sample
    exact_edges: bool = True          # in-step insertion fractions on the switched plant


def open_loop_defaults(params, refs):
    d = derive_equivalents(params)
    return params.v_dc / refs.v_sigma_ref, refs.i_ac_ref_mag * d.r_ac_eq / refs.v_sigma_ref


def steady_start(params, derived, d_dc, d_ac_mag, v_dc, dt_float, n_half):
    """Periodic open-loop state and its one-period averages of i_dc and |i_ac|."""
    x0 = periodic_steady_state(params, derived, d_dc, d_ac_mag, v_dc, dt_float, n_half)
    c = (derived.l_dc_eq, derived.l_ac_eq, derived.r_dc_eq, derived.r_ac_eq, derived.c_eq)
    tr = run_open_loop(x0.as_array(), d_dc, d_ac_mag, v_dc, dt_float, 2 * n_half, n_half, *c)
    return x0, float(np.mean(tr[1:, 0])), float(np.mean(np.abs(tr[1:, 1])))


def simulate(setup, plant="switched", initial=None):
    p = setup.params
    d = derive_equivalents(p)
    dt = setup.dt
    dtf = float(dt)
    n_half = steps_per(p.period / 2, dt)
    n_quarter = steps_per(p.period / 4, dt)
    n_ts = steps_per(p.t_sample, dt)
    n_steps = int(round(setup.t_end / dtf))
    if abs(n_steps * dtf - setup.t_end) > 1e-9 * max(1.0, setup.t_end):
        n_steps = int(math.floor(setup.t_end / dtf + 1e-9))
    refs = setup.refs
    events = sorted(setup.events, key=lambda e: e.t)
    for ev in events:
        if ev.kind == "end":
            n_steps = min(n_steps, int(math.ceil(ev.t / dtf - 1e-9)))

    ol = setup.open_loop_duties or open_loop_defaults(p, refs)
    ol_dc, ol_ac = ol
    v_dc = p.v_dc
    x0, I_dc0, I_ac0 = steady_start(p, d, ol_dc, ol_ac, v_dc, dtf, n_half)
    if initial is not None:
        x0 = initial

    if plant == "switched":
        n_sw = steps_per(p.t_sw, dt)
        if n_sw % (4 * p.n_cells):
            raise ValueError("dt must divide T_sw/(4N)")
        pl = SwitchedPlant(p, d, initial_switched_state(x0, p.n_cells), dtf, n_sw,
                           n_quarter, 2.0 * refs.v_sigma_ref / p.n_cells, setup.exact_edges)
    elif plant == "averaged":
        pl = AveragedPlant(p, d, x0, dtf)
    else:
        raise ValueError(f"unknown plant {plant!r}")

    cfg = ControllerConfig(setup.gains, setup.vdelta_feedforward, setup.average_source)
    n_window = steps_per(p.period, dt)
    ctrl = Controller(p, d, refs, cfg, n_window, (ol_dc, ol_ac), (I_dc0, I_ac0))

    n_filt = 1
    if setup.sample_filter:
        try:
            n_filt = steps_per(p.t_sw / p.n_cells, dt)
        except ValueError:
            n_filt = 1
    fbuf = np.empty((n_filt, 4))
    ncol = len(COLUMNS)
    data = np.empty((n_steps + 1, ncol))
    rec_cells = setup.record_cells and plant == "switched"
    cells = np.empty((n_steps + 1, 4 * p.n_cells)) if rec_cells else None
    clamp_log = []
    markers = []
    ev_i = 0
    closed = False
    i_dc_ref_open = refs.p_demand / v_dc
    row = np.zeros(ncol)

    for s in range(n_steps + 1):
        t = s * dtf
        while ev_i < len(events) and events[ev_i].t <= t + 1e-3 * dtf:
            ev = events[ev_i]
            ev_i += 1
            markers.append((t, ev.kind, ev.args))
            if ev.kind == "enable_controller":
                ctrl.enable()
                closed = True
            elif ev.kind == "disable_compensator":
                ctrl.compensator = False
            elif ev.kind == "enable_compensator":
                ctrl.compensator = True
            elif ev.kind == "set_power_demand":
                pd = float(ev.args[0])
                refs = type(refs)(refs.v_sigma_ref, ac_current_for_power(p, pd) * p.r_ac,
                                  ac_current_for_power(p, pd), pd / v_dc, pd)
                ctrl.refs = refs
                i_dc_ref_open = pd / v_dc
            elif ev.kind == "set_duties":
                ol_dc, ol_ac = float(ev.args[0]), float(ev.args[1])
        sign = 1.0 if (s // n_half) % 2 == 0 else -1.0
        is_sample = s % n_ts == 0
        i_dc, i_ac, v_s, v_d = pl.aggregate()
        fbuf[s % n_filt] = (i_dc, i_ac, v_s, v_d)
        if is_sample:
            meas = tuple(fbuf[:min(s + 1, n_filt)].mean(axis=0)) if n_filt > 1 else (i_dc, i_ac, v_s, v_d)
        if closed:
            if is_sample:
                ctrl.sample(t, sign, meas, v_dc)
            comp = ctrl.compensation((s % n_half) * dtf)
            d_pred = ctrl.d_dc_hold
            d_ac_raw = ctrl.d_ac_hold
            i_dc_ref = ctrl.i_dc_ref
        else:
            comp = 0.0
            d_pred = ol_dc
            d_ac_raw = ol_ac * sign
            if is_sample:
                ctrl.open_loop_sample(t, meas, d_pred, d_ac_raw)
            i_dc_ref = i_dc_ref_open
        d_dc, d_ac, clamped = clamp_duties(d_pred + comp, d_ac_raw)
        if clamped and s < n_steps:
            clamp_log.append((t, d_pred + comp, d_ac_raw))
        if is_sample:
            ctrl.state.prev_d_ac = d_ac
        row[0] = t
        row[1] = i_dc
        row[2] = i_ac
        row[3] = v_s
        row[4] = v_d
        row[5] = d_pred
        row[6] = comp
        row[7] = d_dc
        row[8] = d_ac
        row[9] = refs.i_ac_ref_mag * sign
        row[10] = i_dc_ref
        row[11] = refs.v_sigma_ref
        data[s] = row
        if rec_cells:
            cells[s] = pl.cell_voltages().ravel()
        if s == n_steps:
            break
        pl.advance(s, d_dc, d_ac, v_dc)
        a = pl.aggregate()
        ctrl.observe(a[0], a[1], d_ac, is_sample)

    meta = {"plant": plant, "dt": dtf, "n_steps": n_steps,
            "initial_state": [x0.i_dc, x0.i_ac, x0.v_sigma, x0.v_delta]}
    return Trajectory(data, dtf, cells, p.n_cells if rec_cells else 0, markers, clamp_log,
                      list(getattr(pl, "swap_log", [])), meta)


def default_dt(params, plant):
    return grid_step(params, carrier_resolution=(plant == "switched"))


def averaged_initial(params, refs, duties=None):
    d = derive_equivalents(params)
    dt = default_dt(params, "averaged")
    n_half = steps_per(params.period / 2, dt)
    ol = duties or open_loop_defaults(params, refs)
    return steady_start(params, d, ol[0], ol[1], params.v_dc, float(dt), n_half)[0]
