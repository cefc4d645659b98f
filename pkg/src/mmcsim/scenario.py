"""Scenario configs, presets, orchestration and file outputs."""

import configparser
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, block_average, cell_spread, harmonic_report,
                       model_agreement, moving_average, small_signal_probe, transient_metrics)
from .averaged import PlantAbort
from .controller import PiGains, gvi_transfer
from .engine import COLUMNS, EVENT_KINDS, Event, RunSetup, default_dt, simulate
from .params import (ConverterParams, ParamError, TABLE_I, TABLE_III, check_params,
                     default_references, derive_equivalents, grid_step, max_ac_duty,
                     steady_state_operating_point, steps_per)

CONVERTER_KEYS = {
    "v_dc_v": "v_dc", "p_rated_w": "p_rated", "n_cells": "n_cells", "f_ac_hz": "f_ac",
    "f_sw_hz": "f_sw", "f_sample_hz": "f_sample", "c_cell_f": "c_cell",
    "r_ac_ohm": "r_ac", "l_ac_h": "l_ac", "r_dc_ohm": "r_dc", "l_dc_h": "l_dc",
    "r_arm_ohm": "r_arm", "l_arm_h": "l_arm",
}

SCENARIO_KEYS = {
    "preset": str, "plant": str, "t_end_s": float, "dt_s": float, "output_decimation": int,
    "record_cells": bool, "d_dc_nominal": float, "p_demand_w": float,
    "open_loop_d_dc": float, "open_loop_d_ac": float, "compare_models": bool,
    "sample_filter": bool, "exact_edges": bool,
}

CONTROLLER_KEYS = {
    "k_p_a_per_v": float, "k_i_rad_per_s": float, "pi_limit_a": float,
    "vdelta_feedforward": bool, "average_source": str,
}

FREQRESP_KEYS = {"f_min_hz": float, "f_max_hz": float, "n_points": int,
                 "capacitance": str, "probe_eps_frac": float}

OUTPUT_ROOT_ENV = "MMCSIM_OUTPUT_ROOT"


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class Scenario:
    params: ConverterParams
    refs: object
    gains: PiGains
    events: tuple
    t_end: float
    dt: Fraction = None
    plant: str = "switched"
    output_decimation: int = 10
    record_cells: bool = True
    d_dc_nominal: float = 0.8
    open_loop_duties: tuple = None
    compare: bool = False
    vdelta_feedforward: bool = False
    average_source: str = "measured"
    sample_filter: bool = True
    exact_edges: bool = True
    preset: str = None
    freqresp: dict = field(default_factory=dict)
    text: str = ""

    def setup(self, plant=None):
        plant = plant or self.plant
        dt = self.dt if self.dt is not None else default_dt(self.params, plant)
        return RunSetup(self.params, self.refs, self.gains, self.t_end, dt, self.events,
                        self.open_loop_duties, self.vdelta_feedforward, self.average_source,
                        self.record_cells, self.sample_filter, self.exact_edges)

    @property
    def closed_loop(self):
        return any(e.kind == "enable_controller" for e in self.events)

    def config_hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()


def _converter_block(p):
    inv = {v: k for k, v in CONVERTER_KEYS.items()}
    lines = ["[converter]"]
    for name in CONVERTER_KEYS.values():
        val = getattr(p, name)
        lines.append(f"{inv[name]} = {val!r}")
    return "\n".join(lines)


PRESETS = {
    "fig3": f"""
[scenario]
t_end_s = 0.004
open_loop_d_dc = 0.80
open_loop_d_ac = 0.70
compare_models = true
{_converter_block(replace(TABLE_I, f_sw=17500.0))}
[events]
0.002 = set_duties 0.78 0.72
""",
    "fig6a": f"""
[scenario]
t_end_s = 0.004
{_converter_block(TABLE_I)}
""",
    "fig6b": f"""
[scenario]
t_end_s = 0.004
{_converter_block(replace(TABLE_I, c_cell=1e-3))}
""",
    "fig6c": f"""
[scenario]
t_end_s = 0.004
{_converter_block(replace(TABLE_I, l_arm=100e-6))}
""",
    "fig9": f"""
[scenario]
t_end_s = 0.024
open_loop_d_dc = 0.80
open_loop_d_ac = 0.744
{_converter_block(TABLE_I)}
[controller]
k_p_a_per_v = 1.0
k_i_rad_per_s = {2 * math.pi * 1000!r}
[events]
0.004 = enable_controller
0.010 = set_power_demand 450000
0.014 = disable_compensator
""",
    "fig9e": f"""
[scenario]
t_end_s = 0.016
{_converter_block(TABLE_I)}
[controller]
k_p_a_per_v = 1.0
k_i_rad_per_s = {2 * math.pi * 1000!r}
[events]
0.0 = enable_controller
0.008 = disable_compensator
""",
    "fig12c": f"""
[scenario]
t_end_s = 0.006
p_demand_w = 1000
{_converter_block(TABLE_III)}
[controller]
k_p_a_per_v = 1.0
k_i_rad_per_s = {2 * math.pi * 1000!r}
[events]
0.0 = enable_controller
0.002 = set_power_demand 2500
""",
}


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _convert(kind, raw):
    if kind is bool:
        return _parse_bool(raw)
    if kind is int:
        f = float(raw)
        if f != int(f):
            raise ValueError(f"not an integer: {raw!r}")
        return int(f)
    return kind(raw)


def _read(text, errors):
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#", ";"), strict=True,
                                   interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        errors.append(f"syntax: {exc}")
        return None
    return cp


def _merge_sections(base, over):
    out = {}
    for cp in (base, over):
        if cp is None:
            continue
        for sec in cp.sections():
            dst = out.setdefault(sec, {})
            if sec == "events":
                if cp is over and cp.has_section("events"):
                    dst.clear()
            for k, v in cp.items(sec):
                dst[k] = v
    return out


def parse_scenario(text, preset=None):
    """Parse and validate a scenario config; raise ScenarioError listing every problem."""
    errors = []
    user = _read(text, errors)
    if user is None:
        raise ScenarioError(errors)
    if preset is None and user.has_option("scenario", "preset"):
        preset = user.get("scenario", "preset").strip()
    base = None
    if preset:
        if preset not in PRESETS:
            raise ScenarioError([f"[scenario] preset: unknown preset {preset!r} "
                                 f"(known: {', '.join(sorted(PRESETS))})"])
        base = _read(PRESETS[preset], errors)
    sections = _merge_sections(base, user)

    known = {"scenario", "converter", "controller", "events", "freqresp"}
    for sec in sections:
        if sec not in known:
            errors.append(f"[{sec}]: unknown section")

    def typed(sec, table):
        vals = {}
        for k, raw in sections.get(sec, {}).items():
            if k not in table:
                errors.append(f"[{sec}] {k}: unknown key")
                continue
            try:
                vals[k] = _convert(table[k], raw)
            except ValueError as exc:
                errors.append(f"[{sec}] {k}: {exc}")
        return vals

    sc = typed("scenario", SCENARIO_KEYS)
    ctl = typed("controller", CONTROLLER_KEYS)
    fr = typed("freqresp", FREQRESP_KEYS)

    conv_raw = sections.get("converter", {})
    pvals = {}
    for k, raw in conv_raw.items():
        if k not in CONVERTER_KEYS:
            errors.append(f"[converter] {k}: unknown key")
            continue
        try:
            pvals[CONVERTER_KEYS[k]] = _convert(int if k == "n_cells" else float, raw)
        except ValueError as exc:
            errors.append(f"[converter] {k}: {exc}")
    missing = [k for k, v in CONVERTER_KEYS.items() if v not in pvals and k not in conv_raw]
    for k in missing:
        errors.append(f"[converter] {k}: missing")
    params = None
    if not missing and len(pvals) == len(CONVERTER_KEYS):
        params = ConverterParams(**pvals)
        for msg in check_params(params):
            errors.append(f"[converter] {msg}")
        if not errors and abs(params.f_sample / params.f_ac - round(params.f_sample / params.f_ac)) > 1e-9:
            errors.append("[converter] f_sample_hz must be an integer multiple of f_ac_hz")

    events = []
    last_t = -math.inf
    for k, raw in sections.get("events", {}).items():
        loc = f"[events] {k}"
        try:
            t = float(k)
        except ValueError:
            errors.append(f"{loc}: event time must be a number of seconds")
            continue
        parts = raw.split()
        if not parts:
            errors.append(f"{loc}: empty event")
            continue
        kind, args = parts[0], parts[1:]
        if kind not in EVENT_KINDS:
            errors.append(f"{loc}: unknown event {kind!r}")
            continue
        nargs = {"set_power_demand": 1, "set_duties": 2}.get(kind, 0)
        if len(args) != nargs:
            errors.append(f"{loc}: {kind} takes {nargs} argument(s)")
            continue
        try:
            args = tuple(float(a) for a in args)
        except ValueError:
            errors.append(f"{loc}: non-numeric argument")
            continue
        if t < 0:
            errors.append(f"{loc}: negative time")
        if t <= last_t:
            errors.append(f"{loc}: events must be strictly increasing in time")
        if kind == "set_power_demand" and args[0] < 0:
            errors.append(f"{loc}: power demand must be non-negative")
        if kind == "set_duties" and abs(args[1]) > max_ac_duty(args[0]) + 1e-12:
            errors.append(f"{loc}: infeasible open-loop duties {args}")
        last_t = max(last_t, t)
        events.append(Event(t, kind, args))

    t_end = sc.get("t_end_s")
    if t_end is None:
        errors.append("[scenario] t_end_s: missing")
    elif t_end < 0:
        errors.append("[scenario] t_end_s: must be non-negative")
    elif events and t_end <= events[-1].t and not any(e.kind == "end" for e in events):
        errors.append("[scenario] t_end_s: must exceed the last event time")
    plant = sc.get("plant", "switched")
    if plant not in ("switched", "averaged"):
        errors.append(f"[scenario] plant: expected switched or averaged, got {plant!r}")
    if ctl.get("average_source", "measured") not in ("measured", "reference"):
        errors.append("[controller] average_source: expected measured or reference")
    if sc.get("output_decimation", 1) < 1:
        errors.append("[scenario] output_decimation: must be >= 1")

    refs = None
    gains = None
    ol = None
    dt = None
    if params is not None and not errors:
        try:
            refs = default_references(params, sc.get("d_dc_nominal", 0.8), sc.get("p_demand_w"))
        except ParamError as exc:
            errors.extend(f"[scenario] {v}" for v in exc.violations)
        try:
            gains = PiGains(ctl.get("k_p_a_per_v", 1.0), ctl.get("k_i_rad_per_s", 2 * math.pi * 1000),
                            ctl.get("pi_limit_a", math.inf))
        except ValueError as exc:
            errors.append(f"[controller] {exc}")
        if "open_loop_d_dc" in sc or "open_loop_d_ac" in sc:
            if refs is not None:
                d = derive_equivalents(params)
                ol = (sc.get("open_loop_d_dc", params.v_dc / refs.v_sigma_ref),
                      sc.get("open_loop_d_ac", refs.i_ac_ref_mag * d.r_ac_eq / refs.v_sigma_ref))
                if abs(ol[1]) > max_ac_duty(ol[0]):
                    errors.append(f"[scenario] open-loop duties {ol} are infeasible")
        if "dt_s" in sc:
            dt = Fraction(sc["dt_s"]).limit_denominator(10 ** 12)
            errors.extend(dt_guard_errors(params, dt, plant))
    if errors:
        raise ScenarioError(errors)
    return Scenario(
        params=params, refs=refs, gains=gains, events=tuple(events), t_end=t_end, dt=dt,
        plant=plant, output_decimation=sc.get("output_decimation", 10),
        record_cells=sc.get("record_cells", True), d_dc_nominal=sc.get("d_dc_nominal", 0.8),
        open_loop_duties=ol, compare=sc.get("compare_models", False),
        vdelta_feedforward=ctl.get("vdelta_feedforward", False),
        average_source=ctl.get("average_source", "measured"),
        sample_filter=sc.get("sample_filter", True), exact_edges=sc.get("exact_edges", True),
        preset=preset, freqresp=fr, text=(PRESETS[preset] if preset else "") + "\n" + text,
    )


def dt_guard_errors(params, dt, plant):
    errs = []
    checks = [(params.t_sample, "T_sample"), (params.period / 4, "T/4")]
    if plant == "switched":
        checks.append((params.t_sw / (4 * params.n_cells), "T_sw/(4N)"))
    for period, name in checks:
        try:
            steps_per(period, dt)
        except ParamError:
            errs.append(f"[scenario] dt_s: {float(dt)!r} does not divide {name}")
    if float(dt) > params.t_sw / 20 * (1 + 1e-12):
        errs.append(f"[scenario] dt_s: {float(dt)!r} exceeds T_sw/20")
    return errs


def load_scenario(path=None, preset=None, dt_override=None, plant=None):
    text = Path(path).read_text() if path else ""
    sc = parse_scenario(text, preset=preset)
    if plant:
        sc.plant = plant
        sc.text += f"\n# plant={plant}"
    if dt_override is not None:
        dt = Fraction(dt_override).limit_denominator(10 ** 12)
        errs = dt_guard_errors(sc.params, dt, sc.plant)
        if errs:
            raise ScenarioError(errs)
        sc.dt = dt
        sc.text += f"\n# dt_override={dt_override!r}"
    return sc


# ---------------------------------------------------------------- reports

def _segments(traj, t_end):
    bounds = [0.0] + [t for t, k, _ in traj.events if t > 0] + [t_end]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def segment_reports(traj, sc, settle_periods=2, n_periods=10):
    """Harmonic and ripple metrics over the last 10 periods of each event-free segment."""
    p = sc.params
    T = p.period
    n_sw = max(1, int(round(p.t_sw / traj.dt)))
    smooth = moving_average(traj["i_dc"], n_sw)
    out = []
    for a, b in _segments(traj, traj.t[-1]):
        if b - a < (n_periods + (settle_periods if a > 0 else 0)) * T - 1e-9:
            continue
        k_end = math.floor(b / T + 1e-9)
        w = ((k_end - n_periods) * T, k_end * T)
        try:
            h = harmonic_report(traj, p.f_ac, window=w)
        except AnalysisError:
            continue
        m = traj.window(*w)
        rep = h.as_dict()
        rep["ripple_pp_a"] = float(smooth[m].max() - smooth[m].min())
        rep["v_sigma_mean_v"] = float(np.mean(traj["v_sigma"][m]))
        rep["mode"] = _mode_at(traj, w[0])
        out.append(rep)
    return out


def _mode_at(traj, t):
    closed, comp = False, True
    for t_ev, kind, _ in traj.events:
        if t_ev > t + 1e-12:
            break
        if kind == "enable_controller":
            closed = True
        elif kind == "disable_compensator":
            comp = False
        elif kind == "enable_compensator":
            comp = True
    if not closed:
        return "open_loop"
    return "closed_loop_compensated" if comp else "closed_loop_uncompensated"


def step_reports(traj, sc, band_pct=5.0, after_periods=8):
    """Transient metrics for every power-demand step followed by enough samples."""
    p = sc.params
    T = p.period
    out = []
    ev = traj.events
    for i, (t_ev, kind, args) in enumerate(ev):
        if kind != "set_power_demand":
            continue
        t_next = ev[i + 1][0] if i + 1 < len(ev) else traj.t[-1]
        t_stop = min(t_next, t_ev + after_periods * T)
        if t_stop - t_ev < 3 * T - 1e-12:
            continue
        n_per = int(round(T / traj.dt))
        i_avg = moving_average(traj["i_dc"], n_per)
        pre = traj.window(t_ev - T, t_ev)
        post = traj.window(t_stop - T, t_stop)
        final = float(np.mean(traj["i_dc"][post]))
        vs_ref = sc.refs.v_sigma_ref
        vs = transient_metrics(traj.t, traj["v_sigma"], [(0.0, 0.0), (t_ev, 1.0)], band_pct,
                               T, target=vs_ref, t_stop=t_stop, direction=0)
        idc = transient_metrics(traj.t, i_avg, [(0.0, float(np.mean(traj["i_dc"][pre]))), (t_ev, final)],
                                band_pct, T, t_stop=t_stop)
        # one-period average strips the steady 2w and switching ripple
        vs_avg = moving_average(traj["v_sigma"], n_per)
        after = traj.window(t_ev + T, t_stop)
        vs_dev = float(np.max(np.abs(vs_avg[after] - vs_ref)) / vs_ref * 100.0)
        i_dem = args[0] / sc.params.v_dc
        n_sw = max(1, int(round(sc.params.t_sw / traj.dt)))
        iac = moving_average(traj["i_ac"], n_sw)[post]
        iac_ref = traj["i_ac_ref"][post]
        # skip the samples right after each square-wave edge
        steady = np.abs(iac - iac_ref) < 0.5 * np.abs(iac_ref)
        iac_err = float(np.median(np.abs(iac - iac_ref)[steady]) / np.max(np.abs(iac_ref)) * 100.0)
        out.append({"t_step_s": t_ev, "p_demand_w": args[0],
                    "v_sigma": vs.as_dict(), "i_dc": idc.as_dict(), "i_dc_final_a": final,
                    "v_sigma_period_avg_dev_pct": vs_dev,
                    "i_dc_vs_demand_pct": (final - i_dem) / i_dem * 100.0,
                    "i_dc_ref_final_a": float(np.mean(traj["i_dc_ref"][post])),
                    "i_ac_error_pct": iac_err})
    return out


def balancing_report(traj, sc):
    if traj.cells is None:
        return None
    T = sc.params.period
    rep = {}
    for arm in ("ap", "an", "bp", "bn"):
        s = cell_spread(traj, arm, T)
        rep[arm] = {"spread_v_first": float(s[0]) if len(s) else 0.0,
                    "spread_v_last": float(s[-1]) if len(s) else 0.0,
                    "spread_v_max": float(s.max()) if len(s) else 0.0}
    return rep


def tracking_report(traj, sc, t0=None):
    """Mean absolute AC tracking error and DC reference error while closed loop."""
    on = [t for t, k, _ in traj.events if k == "enable_controller"]
    if not on:
        return None
    T = sc.params.period
    t0 = on[0] + 2 * T if t0 is None else t0
    m = traj.t >= t0
    n_sw = max(1, int(round(sc.params.t_sw / traj.dt)))
    iac = moving_average(traj["i_ac"], n_sw)
    err_ac = np.abs(iac[m] - traj["i_ac_ref"][m])
    return {"i_ac_error_median_a": float(np.median(err_ac)),
            "i_ac_ref_mag_a": float(np.max(np.abs(traj["i_ac_ref"][m]))),
            "i_dc_mean_a": float(np.mean(traj["i_dc"][m])),
            "i_dc_ref_mean_a": float(np.mean(traj["i_dc_ref"][m]))}


@dataclass
class RunResult:
    scenario: Scenario
    trajectory: object
    reports: dict
    extra: dict = field(default_factory=dict)
    status: int = 0


def run_scenario(sc):
    """Simulate the scenario and compute its reports."""
    reports = {"plant": sc.plant, "preset": sc.preset}
    status = 0
    try:
        traj = simulate(sc.setup(), sc.plant)
    except PlantAbort as exc:
        return RunResult(sc, None, {"error": str(exc), "t_abort_s": exc.t}, status=2)
    reports["clamp_events"] = len(traj.clamp_log)
    if len(traj) > 1:
        reports["segments"] = segment_reports(traj, sc)
        reports["steps"] = step_reports(traj, sc)
        bal = balancing_report(traj, sc)
        if bal is not None:
            reports["balancing"] = bal
        tr = tracking_report(traj, sc)
        if tr is not None:
            reports["tracking"] = tr
    extra = {}
    if sc.compare and not sc.closed_loop:
        # both plants on the switched grid so samples line up
        dt_c = sc.dt if sc.dt is not None else default_dt(sc.params, "switched")
        try:
            traj_s = traj if sc.plant == "switched" else simulate(
                replace(sc.setup("switched"), dt=dt_c), "switched")
            traj_a = simulate(replace(sc.setup("averaged"), dt=dt_c), "averaged")
            reports["model_agreement"] = model_agreement(traj_s, traj_a, sc.params, sc.refs)
            extra = {"switched": traj_s, "averaged": traj_a}
        except (AnalysisError, ValueError, PlantAbort) as exc:
            reports["model_agreement"] = {"error": str(exc)}
    return RunResult(sc, traj, reports, extra, status)


def compare_models(sc):
    if sc.closed_loop:
        raise ScenarioError(["compare-models requires an open-loop scenario (no enable_controller)"])
    dt = sc.dt if sc.dt is not None else default_dt(sc.params, "switched")
    traj_s = simulate(replace(sc.setup("switched"), dt=dt), "switched")
    traj_a = simulate(replace(sc.setup("averaged"), dt=dt, record_cells=False), "averaged")
    rep = model_agreement(traj_s, traj_a, sc.params, sc.refs)
    return RunResult(sc, traj_s, {"model_agreement": rep},
                     {"averaged": traj_a, "switched": traj_s})


def freq_points(sc):
    fr = sc.freqresp
    f_min = fr.get("f_min_hz", 10.0)
    f_max = fr.get("f_max_hz", sc.params.f_ac)
    n = fr.get("n_points", 9)
    return np.logspace(math.log10(f_min), math.log10(f_max), n)


def freqresp(sc, freqs=None):
    """Sweep the closed-form transfer function against the numerical probe."""
    p = sc.params
    d = derive_equivalents(p)
    op = steady_state_operating_point(p, sc.refs)
    cap = sc.freqresp.get("capacitance", "equivalent")
    eps = sc.freqresp.get("probe_eps_frac", 1e-3)
    freqs = freq_points(sc) if freqs is None else freqs
    rows = []
    for f in freqs:
        g = gvi_transfer(op, p, d, 2j * math.pi * f, capacitance=cap)
        pr = small_signal_probe(p, op, f, eps_frac=eps)
        rows.append((f, 20 * math.log10(abs(g)), math.degrees(np.angle(g)),
                     20 * math.log10(abs(pr)), math.degrees(np.angle(pr))))
    arr = np.array(rows)
    rep = {"operating_point": op.__dict__, "capacitance": cap,
           "max_mag_error_db": float(np.max(np.abs(arr[:, 1] - arr[:, 3]))),
           "max_phase_error_deg": float(np.max(np.abs(_wrap(arr[:, 2] - arr[:, 4]))))}
    return arr, rep


def _wrap(deg):
    return (np.asarray(deg) + 180.0) % 360.0 - 180.0


# ---------------------------------------------------------------- outputs

def _fmt_rows(arr):
    return "\n".join(",".join(format(v, ".10g") for v in row) for row in arr)


def write_csv(path, header, arr):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        if len(arr):
            fh.write(_fmt_rows(arr))
            fh.write("\n")


def trajectory_table(traj, decimation=1):
    tr = traj.decimate(decimation)
    header = list(COLUMNS)
    arr = tr.data
    if tr.cells is not None:
        header += tr.cell_columns()
        arr = np.hstack([arr, tr.cells])
    return header, arr


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    raise TypeError(type(o))


def _clean(o):
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, np.integer):
        return int(o)
    return o


def write_json(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n")


def emit_outputs(result, out_dir, figures=True, name="trajectory"):
    """Write CSV, reports, manifest and figures; return the list of written files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = result.scenario
    files = []
    if result.trajectory is not None:
        header, arr = trajectory_table(result.trajectory, sc.output_decimation)
        write_csv(out / f"{name}.csv", header, arr)
        files.append(f"{name}.csv")
        events = [{"t_s": t, "kind": k, "args": list(a)} for t, k, a in result.trajectory.events]
        result.reports["events"] = events
    for key, traj in result.extra.items():
        if key == sc.plant and traj is result.trajectory:
            continue
        if hasattr(traj, "data"):
            header, arr = trajectory_table(traj, sc.output_decimation)
            write_csv(out / f"{name}_{key}.csv", header, arr)
            files.append(f"{name}_{key}.csv")
    write_json(out / "reports.json", result.reports)
    files.append("reports.json")
    if figures:
        from .plotting import render_run
        files.extend(render_run(result, out))
    manifest = {"engine": "mmcsim", "engine_version": __version__,
                "config_sha256": sc.config_hash(), "preset": sc.preset, "plant": sc.plant,
                "dt_s": float(result.trajectory.dt) if result.trajectory is not None else None,
                "t_end_s": sc.t_end, "f_ac_hz": sc.params.f_ac,
                "output_decimation": sc.output_decimation, "files": sorted(files),
                "status": result.status}
    write_json(out / "manifest.json", manifest)
    return files + ["manifest.json"]


def default_output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
