"""Converter parameters, derived equivalents, references and per-unit reporting."""

import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction


class ParamError(ValueError):
    """Raised when a parameter set violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ConverterParams:
    v_dc: float
    p_rated: float
    n_cells: int
    f_ac: float
    f_sw: float
    f_sample: float
    c_cell: float
    r_ac: float
    l_ac: float
    r_dc: float
    l_dc: float
    r_arm: float
    l_arm: float

    @property
    def period(self):
        return 1.0 / self.f_ac

    @property
    def omega(self):
        return 2.0 * math.pi * self.f_ac

    @property
    def t_sw(self):
        return 1.0 / self.f_sw

    @property
    def t_sample(self):
        return 1.0 / self.f_sample


@dataclass(frozen=True)
class DerivedParams:
    l_dc_eq: float
    l_ac_eq: float
    r_dc_eq: float
    r_ac_eq: float
    c_eq: float


@dataclass(frozen=True)
class ReferenceSet:
    v_sigma_ref: float
    v_ac_ref_mag: float
    i_ac_ref_mag: float
    i_dc_ref: float
    p_demand: float


@dataclass(frozen=True)
class OperatingPoint:
    v_sigma_op: float
    d_dc_op: float
    d_ac_op_mag: float
    i_dc_op: float
    i_ac_op: float


TABLE_I = ConverterParams(
    v_dc=6000.0, p_rated=500e3, n_cells=8, f_ac=2500.0, f_sw=40e3, f_sample=50e3,
    c_cell=100e-6, r_ac=65.0, l_ac=124e-6, r_dc=0.325, l_dc=8.28e-6,
    r_arm=0.065, l_arm=4.14e-6,
)

# The prototype has no arm inductors; a small parasitic value keeps the
# inductance invariant satisfied without changing the loop dynamics.
TABLE_III = ConverterParams(
    v_dc=250.0, p_rated=2500.0, n_cells=4, f_ac=5000.0, f_sw=40e3, f_sample=100e3,
    c_cell=20e-6, r_ac=16.0, l_ac=29e-6, r_dc=0.2, l_dc=2e-6,
    r_arm=0.0, l_arm=0.1e-6,
)


def check_params(p):
    """Return the list of violated invariants (empty when valid)."""
    bad = []
    for name in ("r_ac", "r_dc", "r_arm"):
        val = getattr(p, name)
        if not (math.isfinite(val) and val >= 0):
            bad.append(f"{name}: resistance must be non-negative")
    for name in ("l_ac", "l_dc", "l_arm"):
        val = getattr(p, name)
        if not (math.isfinite(val) and val > 0):
            bad.append(f"{name}: inductance must be positive")
    if not (math.isfinite(p.c_cell) and p.c_cell > 0):
        bad.append("c_cell: capacitance must be positive")
    if int(p.n_cells) != p.n_cells or p.n_cells < 2:
        bad.append("n_cells: need an integer >= 2")
    for name in ("v_dc", "p_rated", "f_ac", "f_sw", "f_sample"):
        val = getattr(p, name)
        if not (math.isfinite(val) and val > 0):
            bad.append(f"{name}: must be positive")
    if p.f_ac > 0 and p.f_sw <= p.f_ac:
        bad.append("f_sw <= f_ac")
    if p.f_ac > 0 and p.f_sample < 2 * p.f_ac:
        bad.append("f_sample < 2*f_ac")
    return bad


def validate_params(raw):
    """Return ``raw`` unchanged if every invariant holds, else raise ParamError."""
    bad = check_params(raw)
    if bad:
        raise ParamError(bad)
    return raw


def derive_equivalents(p):
    return DerivedParams(
        l_dc_eq=p.l_dc + p.l_arm,
        l_ac_eq=p.l_ac + p.l_arm,
        r_dc_eq=p.r_dc + p.r_arm,
        r_ac_eq=p.r_ac + p.r_arm,
        c_eq=4.0 * p.c_cell / p.n_cells,
    )


def max_ac_duty(d_dc):
    """Largest |d_ac| keeping both arm duties (d_dc -/+ d_ac)/2 inside [0, 1]."""
    return max(0.0, min(d_dc, 2.0 - d_dc))


def default_references(p, d_dc_nominal=0.8, p_demand=None, margin=1.0):
    """Nominal references for a square-wave current into the resistive load.

    ``margin`` scales the AC duty before the feasibility check.
    """
    if not 0.0 < d_dc_nominal < 1.0:
        raise ParamError([f"d_dc_nominal={d_dc_nominal} outside (0, 1)"])
    if p_demand is None:
        p_demand = p.p_rated
    if p_demand < 0:
        raise ParamError(["p_demand must be non-negative"])
    d = derive_equivalents(p)
    v_sigma_ref = p.v_dc / d_dc_nominal
    i_ac = math.sqrt(p_demand / p.r_ac)
    d_ac = i_ac * d.r_ac_eq / v_sigma_ref
    if d_ac * margin > max_ac_duty(d_dc_nominal):
        raise ParamError([
            f"infeasible nominal point: |d_ac|={d_ac:.4f} exceeds arm-duty limit "
            f"{max_ac_duty(d_dc_nominal):.4f} at d_dc={d_dc_nominal}"
        ])
    return ReferenceSet(
        v_sigma_ref=v_sigma_ref,
        v_ac_ref_mag=i_ac * p.r_ac,
        i_ac_ref_mag=i_ac,
        i_dc_ref=p_demand / p.v_dc,
        p_demand=p_demand,
    )


def ac_current_for_power(p, p_demand):
    return math.sqrt(max(p_demand, 0.0) / p.r_ac)


def steady_state_operating_point(p, refs):
    """Operating point implied by the references with v_sigma held at v_sigma_ref.

    The AC loop fixes |D_ac| from the load drop and the DC loop fixes D_dc from
    the cable drop, with I_dc from the converter power balance.
    """
    d = derive_equivalents(p)
    i_ac = refs.i_ac_ref_mag
    p_out = i_ac * i_ac * d.r_ac_eq
    # v_dc*I - R'dc*I^2 = p_out, smaller root
    disc = p.v_dc * p.v_dc - 4.0 * d.r_dc_eq * p_out
    if disc < 0:
        raise ParamError(["power demand exceeds what the DC source can deliver"])
    i_dc = (p.v_dc - math.sqrt(disc)) / (2.0 * d.r_dc_eq) if d.r_dc_eq > 0 else p_out / p.v_dc
    vs = refs.v_sigma_ref
    return OperatingPoint(
        v_sigma_op=vs,
        d_dc_op=(p.v_dc - d.r_dc_eq * i_dc) / vs,
        d_ac_op_mag=d.r_ac_eq * i_ac / vs,
        i_dc_op=i_dc,
        i_ac_op=i_ac,
    )


def per_unit_report(p, convention="impedance"):
    """Per-unit passive component sizes.

    Impedance base: Z_base = v_dc**2 / p_rated. Inductances are reported as
    reactance percentages at f_ac, resistances as percentages of Z_base.
    Capacitance is reported either as Z_base / X_c ("impedance") or, under
    "energy", as the arm energy stored at v_dc divided by the energy delivered
    in one AC period (plus the total stored energy in milliseconds).
    """
    if convention not in ("impedance", "energy"):
        raise ValueError(f"unknown per-unit convention {convention!r}")
    z_base = p.v_dc ** 2 / p.p_rated
    w = p.omega
    rep = {
        "convention": convention,
        "z_base_ohm": z_base,
        "l_ac_pct": 100.0 * w * p.l_ac / z_base,
        "l_dc_pct": 100.0 * w * p.l_dc / z_base,
        "l_arm_pct": 100.0 * w * p.l_arm / z_base,
        "r_ac_pct": 100.0 * p.r_ac / z_base,
        "r_dc_pct": 100.0 * p.r_dc / z_base,
        "r_arm_pct": 100.0 * p.r_arm / z_base,
    }
    c_arm = p.c_cell / p.n_cells
    if convention == "impedance":
        rep["c_arm_pu"] = w * c_arm * z_base
        rep["c_cell_pu"] = w * p.c_cell * z_base
    else:
        v_cell = p.v_dc / p.n_cells
        energy = 4 * p.n_cells * 0.5 * p.c_cell * v_cell ** 2
        rep["stored_energy_ms"] = 1e3 * energy / p.p_rated
        rep["c_arm_pu"] = 0.5 * c_arm * p.v_dc ** 2 * p.f_ac / p.p_rated
    return rep


def _as_fraction(x):
    return Fraction(x).limit_denominator(10 ** 12)


def _fraction_gcd(values):
    den = 1
    for v in values:
        den = den * v.denominator // math.gcd(den, v.denominator)
    g = 0
    for v in values:
        g = math.gcd(g, v.numerator * (den // v.denominator))
    return Fraction(g, den)


def grid_step(p, dt_max=None, carrier_resolution=True, oversampling=5):
    """Largest integration step dividing all scheduling periods.

    The step divides T_sample, T/4 (flip and swap instants) and, when
    ``carrier_resolution`` is set, T_sw/(4N), which is then split into at
    least ``oversampling`` steps. The result is returned as an
    exact Fraction so callers can derive integer step counts.
    """
    periods = [1 / _as_fraction(p.f_sample), 1 / (4 * _as_fraction(p.f_ac))]
    if carrier_resolution:
        periods.append(1 / (4 * p.n_cells * _as_fraction(p.f_sw)))
    base = _fraction_gcd(periods)
    if dt_max is None:
        if carrier_resolution:
            dt_max = float(1 / (4 * p.n_cells * oversampling * _as_fraction(p.f_sw)))
        else:
            dt_max = float(1 / (20 * _as_fraction(p.f_sw)))
    k = max(1, math.ceil(base / _as_fraction(dt_max)))
    return base / k


def steps_per(period, dt):
    """Integer number of steps of size ``dt`` in ``period`` or raise."""
    q = _as_fraction(period) / _as_fraction(dt)
    if q.denominator != 1:
        raise ParamError([f"dt={float(dt)!r} does not divide {float(period)!r}"])
    return q.numerator


def with_changes(p, **kw):
    return replace(p, **kw)


PARAM_FIELDS = tuple(f.name for f in fields(ConverterParams))
