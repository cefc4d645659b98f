"""Circuit-level switched two-leg MMC with per-cell capacitors and cell swapping."""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .averaged import PlantAbort

ARMS = ("ap", "an", "bp", "bn")
AP, AN, BP, BN = range(4)


@dataclass(frozen=True)
class SwitchedState:
    i_arm: np.ndarray   # (4,) ap, an, bp, bn
    v_cell: np.ndarray  # (4, N)
    t: float = 0.0


@dataclass(frozen=True)
class SwapMachine:
    state_index: int
    orders: tuple       # per arm, 1-based cell numbers in firing order
    last_transition: float

    @property
    def n_cells(self):
        return len(self.orders[0])


def square_reference(omega_t):
    return 1.0 if math.fmod(omega_t, 2 * math.pi) % (2 * math.pi) < math.pi else -1.0


def arm_modulation_refs(d_dc, d_ac_mag, omega_t):
    """Per-arm references (ap, an, bp, bn); leg B mirrors leg A."""
    d_ac = d_ac_mag * square_reference(omega_t)
    return signed_arm_refs(d_dc, d_ac)


def signed_arm_refs(d_dc, d_ac):
    m_ap = (d_dc - 1.0) - d_ac
    m_an = (d_dc - 1.0) + d_ac
    return (m_ap, m_an, m_an, m_ap)


def carrier(phase):
    """Unit-period triangle spanning [-1, 1], minimum at phase 0."""
    ph = phase - math.floor(phase)
    return 1.0 - 4.0 * abs(ph - 0.5)


def _rotate_right(order):
    return (order[-1],) + tuple(order[:-1])


def initial_swap_machine(n_cells, period=None):
    ident = tuple(range(1, n_cells + 1))
    rot = _rotate_right(ident)
    last = -period / 4 if period is not None else 0.0
    return SwapMachine(0, (ident, rot, rot, ident), last)


def swap_advance(machine, t):
    """Advance one state: AP/BN rotate on even->odd, AN/BP on odd->even."""
    ap, an, bp, bn = machine.orders
    if machine.state_index % 2 == 0:
        ap = _rotate_right(ap)
        bn = _rotate_right(bn)
    else:
        an = _rotate_right(an)
        bp = _rotate_right(bp)
    n = machine.n_cells
    return SwapMachine((machine.state_index + 1) % (2 * n), (ap, an, bp, bn), t)


def gate_cells(m_arm, t, machine, p, arm=AP):
    """Insertion flags for one arm, indexed by cell (0-based)."""
    n = p.n_cells
    order = machine.orders[arm]
    g = np.zeros(n, dtype=bool)
    base = t * p.f_sw
    for slot in range(n):
        if m_arm >= carrier(base + slot / n):
            g[order[slot] - 1] = True
    return g


def aggregate_leg_quantities(s):
    i = s.i_arm
    v_cap = float(np.sum(s.v_cell[AP]))
    v_can = float(np.sum(s.v_cell[AN]))
    return ((i[0] + i[1] + i[2] + i[3]) / 2.0,
            (i[0] - i[1] - i[2] + i[3]) / 2.0,
            (v_cap + v_can) / 2.0,
            (v_cap - v_can) / 2.0)


def arm_currents(i_dc, i_ac):
    hi = (i_dc + i_ac) / 2.0
    lo = (i_dc - i_ac) / 2.0
    return np.array([hi, lo, lo, hi])


def switched_derivatives(s, g, p, d, v_dc):
    """Derivatives (di_arm, dv_cell) for gate flags ``g`` of shape (4, N)."""
    g = np.asarray(g, dtype=float)
    v_arm = np.sum(g * s.v_cell, axis=1)
    i = s.i_arm
    i_dc = (i[0] + i[1] + i[2] + i[3]) / 2.0
    i_ac = (i[0] - i[1] - i[2] + i[3]) / 2.0
    di_dc = (v_dc - 0.5 * np.sum(v_arm) - d.r_dc_eq * i_dc) / d.l_dc_eq
    di_ac = (-0.5 * (v_arm[0] - v_arm[1] - v_arm[2] + v_arm[3]) - d.r_ac_eq * i_ac) / d.l_ac_eq
    dv = g * i[:, None] / p.c_cell
    return arm_currents(di_dc, di_ac), dv


@numba.njit(cache=True)
def _gates(m, step, orders, n_sw, exact, g):
    """Insertion per cell over one step.

    Grid mode samples the carriers at mid-step. Exact mode returns the
    fraction of the step spent inserted; the carrier is linear inside a step
    because its vertices fall on grid points.
    """
    n = orders.shape[1]
    shift = n_sw // n
    for a in range(4):
        for j in range(n):
            cell = orders[a, j]
            if exact:
                p0 = (step + j * shift) % n_sw
                c0 = 1.0 - 2.0 * abs(2 * p0 - n_sw) / n_sw
                c1 = 1.0 - 2.0 * abs(2 * p0 + 2 - n_sw) / n_sw
                if c1 > c0:
                    f = (m[a] - c0) / (c1 - c0)
                else:
                    f = (m[a] - c1) / (c0 - c1)
                g[a, cell] = min(max(f, 0.0), 1.0)
            else:
                q = (2 * step + 1 + 2 * j * shift) % (2 * n_sw)
                tri = 1.0 - 2.0 * abs(q - n_sw) / n_sw
                g[a, cell] = 1.0 if m[a] >= tri else 0.0


@numba.njit(cache=True)
def _sw_rhs(i2, v, g, v_dc, ldc, lac, rdc, rac, c, di, dv):
    n = v.shape[1]
    va = np.zeros(4)
    for a in range(4):
        acc = 0.0
        for j in range(n):
            acc += g[a, j] * v[a, j]
        va[a] = acc
    i_dc = i2[0]
    i_ac = i2[1]
    di[0] = (v_dc - 0.5 * (va[0] + va[1] + va[2] + va[3]) - rdc * i_dc) / ldc
    di[1] = (-0.5 * (va[0] - va[1] - va[2] + va[3]) - rac * i_ac) / lac
    hi = 0.5 * (i_dc + i_ac) / c
    lo = 0.5 * (i_dc - i_ac) / c
    for j in range(n):
        dv[0, j] = g[0, j] * hi
        dv[1, j] = g[1, j] * lo
        dv[2, j] = g[2, j] * lo
        dv[3, j] = g[3, j] * hi


@numba.njit(cache=True)
def sw_advance(i2, v, m, step, orders, n_sw, exact, v_dc, dt, ldc, lac, rdc, rac, c, g):
    """Evaluate gates for the step, then one in-place RK4 step with gates frozen."""
    _gates(m, step, orders, n_sw, exact, g)
    n = v.shape[1]
    di1 = np.empty(2)
    di2 = np.empty(2)
    di3 = np.empty(2)
    di4 = np.empty(2)
    dv1 = np.empty((4, n))
    dv2 = np.empty((4, n))
    dv3 = np.empty((4, n))
    dv4 = np.empty((4, n))
    iy = np.empty(2)
    vy = np.empty((4, n))
    _sw_rhs(i2, v, g, v_dc, ldc, lac, rdc, rac, c, di1, dv1)
    for k in range(2):
        iy[k] = i2[k] + 0.5 * dt * di1[k]
    for a in range(4):
        for j in range(n):
            vy[a, j] = v[a, j] + 0.5 * dt * dv1[a, j]
    _sw_rhs(iy, vy, g, v_dc, ldc, lac, rdc, rac, c, di2, dv2)
    for k in range(2):
        iy[k] = i2[k] + 0.5 * dt * di2[k]
    for a in range(4):
        for j in range(n):
            vy[a, j] = v[a, j] + 0.5 * dt * dv2[a, j]
    _sw_rhs(iy, vy, g, v_dc, ldc, lac, rdc, rac, c, di3, dv3)
    for k in range(2):
        iy[k] = i2[k] + dt * di3[k]
    for a in range(4):
        for j in range(n):
            vy[a, j] = v[a, j] + dt * dv3[a, j]
    _sw_rhs(iy, vy, g, v_dc, ldc, lac, rdc, rac, c, di4, dv4)
    for k in range(2):
        i2[k] += dt / 6.0 * (di1[k] + 2.0 * di2[k] + 2.0 * di3[k] + di4[k])
    for a in range(4):
        for j in range(n):
            v[a, j] += dt / 6.0 * (dv1[a, j] + 2.0 * dv2[a, j] + 2.0 * dv3[a, j] + dv4[a, j])


def initial_switched_state(avg_state, n_cells):
    v = np.empty((4, n_cells))
    v_cap = (avg_state.v_sigma + avg_state.v_delta) / n_cells
    v_can = (avg_state.v_sigma - avg_state.v_delta) / n_cells
    v[AP] = v_cap
    v[BN] = v_cap
    v[AN] = v_can
    v[BP] = v_can
    return SwitchedState(arm_currents(avg_state.i_dc, avg_state.i_ac), v, 0.0)


class SwitchedPlant:
    """Stateful switched plant driven step by step by the simulation engine."""

    def __init__(self, params, derived, state, dt, n_sw, n_quarter, v_cell_max, exact_edges=True):
        self.p = params
        self.d = derived
        self.dt = dt
        self.n_sw = n_sw
        self.n_quarter = n_quarter
        self.v_cell_max = v_cell_max
        self.exact = exact_edges
        i = state.i_arm
        self.i2 = np.array([(i[0] + i[1] + i[2] + i[3]) / 2.0, (i[0] - i[1] - i[2] + i[3]) / 2.0])
        self.v = np.array(state.v_cell, dtype=float)
        self.machine = initial_swap_machine(params.n_cells, params.period)
        self.orders = self._order_array()
        self.g = np.zeros((4, params.n_cells))
        self.m = np.zeros(4)
        self.swap_log = []
        self._c = (derived.l_dc_eq, derived.l_ac_eq, derived.r_dc_eq, derived.r_ac_eq, params.c_cell)

    @property
    def n_cells_recorded(self):
        return 4 * self.p.n_cells

    def _order_array(self):
        return np.array([[c - 1 for c in o] for o in self.machine.orders], dtype=np.int64)

    def aggregate(self):
        v_cap = self.v[AP].sum()
        v_can = self.v[AN].sum()
        return self.i2[0], self.i2[1], 0.5 * (v_cap + v_can), 0.5 * (v_cap - v_can)

    def cell_voltages(self):
        return self.v

    def state(self, t):
        return SwitchedState(arm_currents(self.i2[0], self.i2[1]), self.v.copy(), t)

    def advance(self, step, d_dc, d_ac, v_dc):
        # swap instants sit a quarter period into each half cycle
        if step >= self.n_quarter and (step - self.n_quarter) % (2 * self.n_quarter) == 0:
            self.machine = swap_advance(self.machine, step * self.dt)
            self.orders = self._order_array()
            self.swap_log.append((step * self.dt, self.machine.state_index))
        m = self.m
        m[0] = m[3] = (d_dc - 1.0) - d_ac
        m[1] = m[2] = (d_dc - 1.0) + d_ac
        sw_advance(self.i2, self.v, m, step, self.orders, self.n_sw, self.exact, v_dc, self.dt, *self._c, self.g)
        t = (step + 1) * self.dt
        if not (np.isfinite(self.i2).all() and np.isfinite(self.v).all()):
            raise PlantAbort("non-finite switched state", t)
        vmin = self.v.min()
        vmax = self.v.max()
        if vmin <= 0 or vmax >= self.v_cell_max:
            raise PlantAbort(f"cell voltage left (0, {self.v_cell_max:.6g}) V: "
                             f"min {vmin:.6g}, max {vmax:.6g}", t)
