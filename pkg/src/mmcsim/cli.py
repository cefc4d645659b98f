"""Command line entry point: run, compare-models, freqresp and harmonics."""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import AnalysisError, harmonic_report
from .engine import COLUMNS, Trajectory
from .params import ParamError
from .scenario import (OUTPUT_ROOT_ENV, PRESETS, ScenarioError, compare_models,
                       default_output_root, emit_outputs, freqresp, load_scenario,
                       run_scenario, write_csv, write_json)


def _out_dir(args, name):
    if args.out:
        return Path(args.out)
    return default_output_root() / name


def _label(config, preset):
    if config:
        return Path(config).stem
    return preset or "scenario"


def _load(args, config=None):
    config = config if config is not None else args.config
    if not config and not args.preset:
        raise ScenarioError(["a config file or --preset is required"])
    return load_scenario(config, preset=args.preset, dt_override=args.dt_override,
                         plant=args.plant)


def _run_one(config, out, preset, dt_override, plant, figures):
    sc = load_scenario(config, preset=preset, dt_override=dt_override, plant=plant)
    res = run_scenario(sc)
    emit_outputs(res, out, figures=figures)
    return res.status, res.reports.get("error")


def cmd_run(args):
    if args.batch:
        configs = sorted(Path(args.batch).glob("*.ini"))
        if not configs:
            print(f"no *.ini configs in {args.batch}", file=sys.stderr)
            return 1
        root = Path(args.out) if args.out else default_output_root()
        jobs = [(str(c), root / c.stem, args.preset, args.dt_override, args.plant,
                 not args.no_figures) for c in configs]
        # one process per scenario; outputs do not depend on scheduling
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_run_one, *zip(*jobs)))
        status = 0
        for (cfg, *_), (st, err) in zip(jobs, results):
            print(f"{cfg}: {'ok' if st == 0 else 'failed: ' + str(err)}")
            status = max(status, st)
        return status
    sc = _load(args)
    res = run_scenario(sc)
    out = _out_dir(args, _label(args.config, args.preset))
    emit_outputs(res, out, figures=not args.no_figures)
    if res.status:
        print(f"plant abort: {res.reports['error']}", file=sys.stderr)
    print(json.dumps(_summary(res.reports), indent=2))
    print(f"outputs written to {out}")
    return res.status


def _summary(reports):
    keep = ("segments", "steps", "model_agreement", "tracking", "error")
    return {k: reports[k] for k in keep if k in reports}


def cmd_compare(args):
    sc = _load(args)
    res = compare_models(sc)
    out = _out_dir(args, _label(args.config, args.preset) + "_compare")
    emit_outputs(res, out, figures=not args.no_figures)
    print(json.dumps(res.reports["model_agreement"], indent=2))
    print(f"outputs written to {out}")
    return 0


def cmd_freqresp(args):
    sc = _load(args)
    arr, rep = freqresp(sc)
    out = _out_dir(args, _label(args.config, args.preset) + "_freqresp")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "freqresp.csv", ["f_hz", "model_db", "model_deg", "probe_db", "probe_deg"], arr)
    write_json(out / "freqresp_report.json", rep)
    if not args.no_figures:
        from .plotting import plot_bode
        plot_bode(arr, out / "bode.png")
    for row in arr:
        print("f={:9.3f} Hz  model {:8.3f} dB {:8.2f} deg   probe {:8.3f} dB {:8.2f} deg".format(*row))
    print(f"max error {rep['max_mag_error_db']:.3f} dB, {rep['max_phase_error_deg']:.3f} deg")
    return 0


def read_trajectory_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if tuple(header[:len(COLUMNS)]) != COLUMNS:
        raise AnalysisError(f"{path}: unexpected CSV header")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dt = float(arr[1, 0] - arr[0, 0]) if len(arr) > 1 else 0.0
    return Trajectory(arr[:, :len(COLUMNS)], dt)


def _manifest_f_ac(csv_path):
    man = Path(csv_path).parent / "manifest.json"
    if man.exists():
        return json.loads(man.read_text()).get("f_ac_hz")
    return None


def cmd_harmonics(args):
    traj = read_trajectory_csv(args.csv)
    f_ac = args.f_ac_hz or _manifest_f_ac(args.csv)
    if not f_ac:
        raise AnalysisError("AC frequency unknown: pass --f-ac-hz or keep manifest.json beside the CSV")
    window = tuple(args.window) if args.window else None
    rep = harmonic_report(traj, f_ac, signal=args.signal, window=window, n_periods=args.periods)
    print(json.dumps(rep.as_dict(), indent=2))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "harmonics.json", rep.as_dict())
        if not args.no_figures:
            from .plotting import plot_spectrum
            m = traj.window(*rep.window)
            plot_spectrum(traj.t[m], traj[args.signal][m], f_ac, out / "spectrum.png")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="mmcsim", description=__doc__,
                                 epilog=f"Default output root: ${OUTPUT_ROOT_ENV} or ./runs")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, batch=False):
        p.add_argument("config", nargs="?", help="scenario config (.ini)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--plant", choices=("switched", "averaged"))
        p.add_argument("--dt-override", type=float, help="integration step in seconds")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--no-figures", action="store_true")
        if batch:
            p.add_argument("--batch", help="directory of *.ini configs to run concurrently")
            p.add_argument("--jobs", type=int, default=None, help="worker processes for --batch")

    p = sub.add_parser("run", help="simulate a scenario")
    common(p, batch=True)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare-models", help="switched vs averaged on an open-loop scenario")
    common(p)
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("freqresp", help="G_vi model vs numerical probe")
    common(p)
    p.set_defaults(func=cmd_freqresp)
    p = sub.add_parser("harmonics", help="harmonic report from a trajectory CSV")
    p.add_argument("csv")
    p.add_argument("--f-ac-hz", type=float)
    p.add_argument("--signal", default="i_dc", choices=COLUMNS[1:])
    p.add_argument("--periods", type=int, default=10)
    p.add_argument("--window", type=float, nargs=2, metavar=("T0", "T1"))
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_harmonics)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ParamError, AnalysisError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
