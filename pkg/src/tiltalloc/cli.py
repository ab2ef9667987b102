"""Command-line front end: ``tiltalloc {run,suite,wrench,trim}``."""

import argparse
import dataclasses
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import corpus
from .config import ConfigError, load_config
from .params import ACTUATOR_NAMES
from .report import SummaryTable, emit_plotdata
from .sim.scenario import TRACE_COLUMNS, run_scenario
from .trim import NoTrimError, find_trim
from .wrench_space import (FIXED_WING, MULTIROTOR, cruise_check, export_wrench_cloud,
                           sample_wrench_set, static_hover_check)

EXIT_OK, EXIT_CRASH, EXIT_CONFIG = 0, 1, 2


def _out_dir(args):
    out = args.out or os.environ.get("TILTALLOC_OUT") or "results"
    os.makedirs(out, exist_ok=True)
    return out


def _say(args, text):
    if not args.quiet:
        sys.stdout.write(text)


def _with_seed(scn, seed):
    return scn if seed is None else dataclasses.replace(scn, seed=seed)


def _write_run(result, out):
    name = result.summary.name
    result.trace.to_csv(os.path.join(out, f"{name}_trace.csv"))
    with open(os.path.join(out, f"{name}_summary.txt"), "w") as fh:
        fh.write(result.summary.to_kv())
    with open(os.path.join(out, f"{name}_summary.json"), "w") as fh:
        fh.write(result.summary.to_json())


def _summary_text(summaries, fmt):
    table = SummaryTable(summaries)
    return table.to_csv() if fmt == "csv" else table.to_kv()


def cmd_run(args):
    scn = _with_seed(load_config(args.scenario), args.seed)
    unknown = [c for c in args.plot if c not in TRACE_COLUMNS or c == "phase"]
    if unknown:
        valid = ", ".join(c for c in TRACE_COLUMNS if c != "phase")
        raise KeyError(f"unknown channel(s) {', '.join(unknown)}; valid: {valid}")
    out = _out_dir(args)
    result = run_scenario(scn)
    _write_run(result, out)
    if args.plot:
        emit_plotdata(result.trace, args.plot, out)
    _say(args, _summary_text([result.summary], args.format))
    return EXIT_CRASH if args.strict and result.summary.crashed else EXIT_OK


def _run_case(job):
    name, seed = job
    return name, run_scenario(_with_seed(corpus.load_case(name), seed))


def cmd_suite(args):
    names = args.cases or corpus.suite_names()
    for n in names:
        if n not in corpus.all_names():
            raise ConfigError(f"unknown case; valid: {', '.join(corpus.all_names())}", field=n,
                              source="suite")
    out = _out_dir(args)
    jobs = [(n, args.seed) for n in names]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = dict(pool.map(_run_case, jobs))
    else:
        results = dict(_run_case(j) for j in jobs)
    summaries = []
    for n in names:
        _write_run(results[n], out)
        summaries.append(results[n].summary)
    table = SummaryTable(summaries)
    with open(os.path.join(out, "summary_table.csv"), "w") as fh:
        fh.write(table.to_csv())
    with open(os.path.join(out, "summary_table.txt"), "w") as fh:
        fh.write(table.to_text())
    _say(args, table.to_csv() if args.format == "csv" else table.to_kv())
    crashed = any(s.crashed for s in summaries)
    return EXIT_CRASH if args.strict and crashed else EXIT_OK


def cmd_wrench(args):
    if args.config in (MULTIROTOR, FIXED_WING):
        name, config, failed = args.config, args.config, None
        params = geom = bounds = None
        airspeed = 20.0
    else:
        scn = load_config(args.config)
        name, config = scn.name, scn.start_phase
        failed = scn.failures[0].failure if scn.failures else None
        params, geom, bounds, airspeed = scn.params, scn.geometry, scn.bounds, scn.airspeed
    seed = 0 if args.seed is None else args.seed
    out = _out_dir(args)
    sample = sample_wrench_set(config, failed, args.samples, seed, airspeed, params, geom, bounds)
    export_wrench_cloud(sample, os.path.join(out, f"{name}_wrench.csv"))
    if config == MULTIROTOR:
        reports = {"hover_fixed_tilt": static_hover_check(failed, False, params, geom, bounds),
                   "hover_free_tilt": static_hover_check(failed, True, params, geom, bounds, seed)}
    else:
        reports = {"cruise": cruise_check(failed, airspeed, params, geom, bounds, seed)}
    text = "".join(f"[{k}]\n{r.to_kv()}" for k, r in reports.items())
    with open(os.path.join(out, f"{name}_feasibility.txt"), "w") as fh:
        fh.write(text)
    if args.format == "csv":
        _say(args, "check,feasible\n" + "".join(f"{k},{str(r.feasible).lower()}\n"
                                              for k, r in reports.items()))
    else:
        _say(args, text)
    return EXIT_OK


def cmd_trim(args):
    phase = {"multirotor": "hover", "fixed_wing": "cruise"}.get(args.phase, args.phase)
    airspeed = args.airspeed if phase == "cruise" else None
    try:
        trim = find_trim(phase, airspeed)
    except NoTrimError as exc:
        sys.stderr.write(f"trim: {exc}\n")
        return EXIT_CRASH
    values = [("phase", trim.phase), ("alpha", trim.alpha), ("airspeed", trim.aero.airspeed)]
    values += list(zip(ACTUATOR_NAMES, np.asarray(trim.u0, dtype=float)))
    values.append(("residual", trim.residual_norm))
    fmt = lambda v: v if isinstance(v, str) else f"{float(v):.9g}"
    if args.format == "csv":
        text = ",".join(k for k, _ in values) + "\n" + ",".join(fmt(v) for _, v in values) + "\n"
    else:
        text = "".join(f"{k} = {fmt(v)}\n" for k, v in values)
    _say(args, text)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $TILTALLOC_OUT or ./results)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--format", choices=("csv", "kv"), default="kv", help="stdout format")
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    common.add_argument("--strict", action="store_true", help="exit 1 if any run crashed")

    p = argparse.ArgumentParser(prog="tiltalloc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run one scenario file")
    r.add_argument("scenario", help="scenario config file")
    r.add_argument("--plot", nargs="*", default=[], metavar="CHANNEL",
                   help="trace columns to write as <scenario>_<channel>.dat")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("suite", parents=[common], help="run the failure-case corpus")
    s.add_argument("--cases", nargs="*", help="subset of case names (default: the ten table cases)")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_suite)
    w = sub.add_parser("wrench", parents=[common], help="wrench-set sampling and feasibility")
    w.add_argument("config", help="'multirotor', 'fixed_wing' or a scenario config file")
    w.add_argument("--samples", type=int, default=2000)
    w.set_defaults(func=cmd_wrench)
    t = sub.add_parser("trim", parents=[common], help="print a trim point")
    t.add_argument("phase", choices=("hover", "cruise", "multirotor", "fixed_wing"))
    t.add_argument("--airspeed", type=float, default=20.0)
    t.set_defaults(func=cmd_trim)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except KeyError as exc:
        sys.stderr.write(f"error: {exc.args[0]}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
