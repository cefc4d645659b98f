"""Continuous averaged two-leg model with a fixed-step RK4 integrator."""

import math
from dataclasses import dataclass

import numba
import numpy as np


class PlantAbort(RuntimeError):
    """A simulation left its valid region; ``t`` is the offending time."""

    def __init__(self, message, t=None):
        self.t = t
        if t is not None:
            message = f"t={t:.9g} s: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class AveragedState:
    i_dc: float
    i_ac: float
    v_sigma: float
    v_delta: float

    def as_array(self):
        return np.array([self.i_dc, self.i_ac, self.v_sigma, self.v_delta])

    @classmethod
    def from_array(cls, x):
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))


@dataclass(frozen=True)
class ControlInput:
    d_dc: float
    d_ac: float
    v_dc_source: float


def averaged_derivatives(s, u, d):
    """Time derivative of the averaged state under input ``u``."""
    return AveragedState(
        i_dc=(u.v_dc_source - u.d_dc * s.v_sigma + u.d_ac * s.v_delta - d.r_dc_eq * s.i_dc) / d.l_dc_eq,
        i_ac=(-u.d_dc * s.v_delta + u.d_ac * s.v_sigma - d.r_ac_eq * s.i_ac) / d.l_ac_eq,
        v_sigma=(u.d_dc * s.i_dc - u.d_ac * s.i_ac) / d.c_eq,
        v_delta=(u.d_dc * s.i_ac - u.d_ac * s.i_dc) / d.c_eq,
    )


def _axpy(s, k, h):
    return AveragedState(s.i_dc + h * k.i_dc, s.i_ac + h * k.i_ac,
                         s.v_sigma + h * k.v_sigma, s.v_delta + h * k.v_delta)


def integrate_step(s, u_of_t, t, dt, d, f=averaged_derivatives):
    """One classical RK4 step; ``u_of_t`` maps time to a ControlInput."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    h = 0.5 * dt
    k1 = f(s, u_of_t(t), d)
    k2 = f(_axpy(s, k1, h), u_of_t(t + h), d)
    k3 = f(_axpy(s, k2, h), u_of_t(t + h), d)
    k4 = f(_axpy(s, k3, dt), u_of_t(t + dt), d)
    out = AveragedState(*(
        a + dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(
            (s.i_dc, s.i_ac, s.v_sigma, s.v_delta),
            (k1.i_dc, k1.i_ac, k1.v_sigma, k1.v_delta),
            (k2.i_dc, k2.i_ac, k2.v_sigma, k2.v_delta),
            (k3.i_dc, k3.i_ac, k3.v_sigma, k3.v_delta),
            (k4.i_dc, k4.i_ac, k4.v_sigma, k4.v_delta),
        )
    ))
    if not all(math.isfinite(v) for v in (out.i_dc, out.i_ac, out.v_sigma, out.v_delta)):
        raise PlantAbort("non-finite averaged state", t + dt)
    return out


def rk4_scalar(f, x, t, dt):
    """RK4 step for a scalar or array ODE dx/dt = f(t, x)."""
    k1 = f(t, x)
    k2 = f(t + dt / 2, x + dt / 2 * k1)
    k3 = f(t + dt / 2, x + dt / 2 * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@numba.njit(cache=True)
def _rhs(x, d_dc, d_ac, v_dc, ldc, lac, rdc, rac, ceq, out):
    out[0] = (v_dc - d_dc * x[2] + d_ac * x[3] - rdc * x[0]) / ldc
    out[1] = (-d_dc * x[3] + d_ac * x[2] - rac * x[1]) / lac
    out[2] = (d_dc * x[0] - d_ac * x[1]) / ceq
    out[3] = (d_dc * x[1] - d_ac * x[0]) / ceq


@numba.njit(cache=True)
def rk4_held(x, d_dc, d_ac, v_dc, dt, ldc, lac, rdc, rac, ceq):
    """In-place RK4 step with inputs held constant over the step."""
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    y = np.empty(4)
    _rhs(x, d_dc, d_ac, v_dc, ldc, lac, rdc, rac, ceq, k1)
    for i in range(4):
        y[i] = x[i] + 0.5 * dt * k1[i]
    _rhs(y, d_dc, d_ac, v_dc, ldc, lac, rdc, rac, ceq, k2)
    for i in range(4):
        y[i] = x[i] + 0.5 * dt * k2[i]
    _rhs(y, d_dc, d_ac, v_dc, ldc, lac, rdc, rac, ceq, k3)
    for i in range(4):
        y[i] = x[i] + dt * k3[i]
    _rhs(y, d_dc, d_ac, v_dc, ldc, lac, rdc, rac, ceq, k4)
    for i in range(4):
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


@numba.njit(cache=True)
def run_open_loop(x0, d_dc, d_ac_mag, v_dc, dt, n_steps, n_half, ldc, lac, rdc, rac, ceq):
    """Open-loop run with d_ac = d_ac_mag * square; returns states at every step."""
    out = np.empty((n_steps + 1, 4))
    x = x0.copy()
    out[0] = x
    for k in range(n_steps):
        sq = 1.0 if (k // n_half) % 2 == 0 else -1.0
        rk4_held(x, d_dc, d_ac_mag * sq, v_dc, dt, ldc, lac, rdc, rac, ceq)
        out[k + 1] = x
    return out


class AveragedPlant:
    """Stateful wrapper used by the simulation engine."""

    n_cells_recorded = 0

    def __init__(self, params, derived, state, dt):
        self.p = params
        self.d = derived
        self.dt = dt
        self.x = state.as_array().astype(float)
        self._c = (derived.l_dc_eq, derived.l_ac_eq, derived.r_dc_eq, derived.r_ac_eq, derived.c_eq)

    def aggregate(self):
        return self.x[0], self.x[1], self.x[2], self.x[3]

    def cell_voltages(self):
        return None

    def advance(self, step, d_dc, d_ac, v_dc):
        rk4_held(self.x, d_dc, d_ac, v_dc, self.dt, *self._c)
        if not (np.isfinite(self.x).all()):
            raise PlantAbort("non-finite averaged state", (step + 1) * self.dt)
        if self.x[2] <= 0:
            raise PlantAbort("v_sigma collapsed to a non-positive value", (step + 1) * self.dt)


def periodic_steady_state(params, derived, d_dc, d_ac_mag, v_dc, dt, n_half):
    """Initial state whose open-loop response is exactly T-periodic.

    Over one AC period the held-input RK4 map is affine, x -> A x + b, so the
    fixed point solves (I - A) x = b. A and b are recovered from five runs.
    """
    c = (derived.l_dc_eq, derived.l_ac_eq, derived.r_dc_eq, derived.r_ac_eq, derived.c_eq)
    n = 2 * n_half
    zero = np.zeros(4)
    b = run_open_loop(zero, d_dc, d_ac_mag, v_dc, dt, n, n_half, *c)[-1]
    a = np.empty((4, 4))
    scale = np.array([10.0, 10.0, 100.0, 100.0])
    for j in range(4):
        e = np.zeros(4)
        e[j] = scale[j]
        a[:, j] = (run_open_loop(e, d_dc, d_ac_mag, v_dc, dt, n, n_half, *c)[-1] - b) / scale[j]
    x = np.linalg.solve(np.eye(4) - a, b)
    return AveragedState.from_array(x)
