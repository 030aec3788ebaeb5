"""
Command line front end: ``occmarkov ingest|train|generate|evaluate|pipeline``.

Parameters come from built-in defaults, then an optional ``--config`` file,
then explicit flags (highest precedence). The config file is TOML with
top-level keys shared by every command and optional ``[<command>]`` tables.
A JSON artifact written by this tool is also accepted as ``--config``; its
embedded parameters are reused, which reproduces the artifact.

Every artifact embeds the resolved parameters, the tool version and the
SHA-256 of each input file. Errors are reported on one line as
``error: <Code>: <message>`` with exit status 1; ``--strict`` makes a flagged
evaluation exit with status 3.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import io as oio
from .chain import MINUTES_PER_DAY, DEFAULT_SMOOTHING, build_state_binning, learn_model
from .errors import ConfigError, MixedZones, OccupancyError, UnknownZone
from .evaluate import DEFAULT_THRESHOLD, evaluate_zone
from .ingest import DayTrace, load_day_traces
from .metrics import HistogramSpec
from .simulate import DEFAULT_START_DATE, SimulationConfig, sample_ensemble

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_ERROR = 1
EXIT_FLAGGED = 3

INGEST = {"format": "auto", "grid_step": 1, "initial_value": 0, "gap_threshold": 24.0,
          "all_days": False}
TRAIN = {"zone": None, "states": None, "smoothing": DEFAULT_SMOOTHING}
GENERATE = {"n_days": 250, "seed": 0, "output_step": 1, "initial_state": "empirical",
            "start_date": DEFAULT_START_DATE.isoformat(), "csv_format": "event_csv"}
EVALUATE = {"zone": None, "states": None, "threshold": DEFAULT_THRESHOLD, "bin_width": 10.0,
            "max_duration": float(MINUTES_PER_DAY), "overflow": "clamp", "strict": False}
DEFAULTS = {
    "ingest": INGEST,
    "train": TRAIN,
    "generate": GENERATE,
    "evaluate": EVALUATE,
    # "auto": generate on the grid the measured data was actually sampled on
    "pipeline": {**INGEST, **TRAIN, **GENERATE, **EVALUATE, "output_step": "auto"},
}


# -- configuration ----------------------------------------------------------

def _read_config_file(path: str, command: str) -> dict:
    p = Path(path)
    try:
        if p.suffix == ".json":
            doc = json.loads(p.read_text(encoding="utf-8"))
            params = doc.get("config", {}).get("parameters")
            if not isinstance(params, dict):
                raise ConfigError(f"{path}: no embedded 'config.parameters'")
            return {k: v for k, v in params.items() if k in DEFAULTS[command]}
        doc = tomllib.loads(p.read_text(encoding="utf-8"))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = set().union(*DEFAULTS.values())
    out = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in DEFAULTS:
                raise ConfigError(f"{path}: unknown table [{key}]")
            continue
        if key not in known:
            raise ConfigError(f"{path}: unknown key '{key}'")
        if key in DEFAULTS[command]:
            out[key] = value
    for key, value in doc.get(command, {}).items():
        if key not in DEFAULTS[command]:
            raise ConfigError(f"{path}: unknown key '{key}' in [{command}]")
        out[key] = value
    return out


def resolve_parameters(command: str, args: argparse.Namespace) -> dict:
    params = dict(DEFAULTS[command])
    if args.config:
        params.update(_read_config_file(args.config, command))
    for key in params:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    return params


def _digest(path) -> dict:
    data = Path(path).read_bytes()
    return {"name": Path(path).name, "sha256": hashlib.sha256(data).hexdigest()}


def _provenance(command: str, params: dict, inputs: dict) -> dict:
    return {"command": command, "tool_version": __version__, "parameters": params,
            "inputs": {k: _digest(v) for k, v in inputs.items()}}


# -- steps ------------------------------------------------------------------

def _detect_format(path) -> str:
    with open(path, encoding="utf-8-sig") as fh:
        header = fh.readline().strip().replace(" ", "")
    return "event_csv" if header == "timestamp,zone,value" else "wide_csv"


def run_ingest(path, params: dict):
    fmt = params["format"]
    if fmt == "auto":
        fmt = _detect_format(path)
    if fmt not in ("wide_csv", "event_csv"):
        raise ConfigError(f"unknown format {fmt!r}")
    gap = float(params["gap_threshold"])
    try:
        return load_day_traces(
            path, fmt,
            grid_step=dt.timedelta(minutes=int(params["grid_step"])),
            initial_value=int(params["initial_value"]),
            gap_threshold=dt.timedelta(hours=gap) if gap > 0 else None,
            weekdays_only=not params["all_days"],
        )
    except OccupancyError as exc:
        # keep the error type, add the file name to the message
        raise type(exc)(f"{Path(path).name}: {exc}") from None


def _to_minutes(traces: list[DayTrace]) -> list[DayTrace]:
    # zero-order hold makes upsampling a coarse grid to minutes exact
    out = []
    for t in traces:
        n = len(t.values)
        if n != MINUTES_PER_DAY:
            if MINUTES_PER_DAY % n:
                raise ValueError(f"{t.date}: {n} samples do not tile a day")
            t = DayTrace(t.date, t.zone_id, np.repeat(t.values, MINUTES_PER_DAY // n))
        out.append(t)
    return out


def _pick_zone(traces: dict, zone: str | None) -> str:
    if zone is None:
        if len(traces) != 1:
            raise UnknownZone(f"archive holds zones {sorted(traces)}; choose one with --zone")
        return next(iter(traces))
    if zone not in traces:
        raise UnknownZone(f"zone {zone!r} not in archive (zones: {sorted(traces)})")
    return zone


def run_train(traces: dict, zone: str, params: dict):
    states = params["states"]
    return learn_model(_to_minutes(traces[zone]), M=None if states is None else int(states),
                       smoothing=float(params["smoothing"]))


def native_step(traces: list[DayTrace]) -> int:
    """Coarsest step (a divisor of 30 minutes) on which every change in ``traces`` falls."""
    g = MINUTES_PER_DAY
    for t in traces:
        scale = MINUTES_PER_DAY // len(t.values)
        change = np.flatnonzero(t.values[1:] != t.values[:-1]) + 1
        g = math.gcd(g, *(int(c) * scale for c in change))
    return max(d for d in (1, 2, 3, 5, 6, 10, 15, 30) if g % d == 0)


def run_generate(model, params: dict, measured: list[DayTrace] | None = None) -> list[DayTrace]:
    init = params["initial_state"]
    step = params["output_step"]
    if step == "auto":
        step = native_step(measured) if measured else 1
    config = SimulationConfig(
        n_days=int(params["n_days"]), seed=int(params["seed"]),
        initial_state=init if init == "empirical" else int(init),
        output_step=int(step),
        start_date=dt.date.fromisoformat(str(params["start_date"])),
    )
    return sample_ensemble(model, config)


def run_evaluate(measured: dict, predicted: dict, binnings: dict, params: dict) -> list:
    if params["zone"] is not None:
        zones = [params["zone"]]
        for traces in (measured, predicted):
            _pick_zone(traces, params["zone"])
    else:
        zones = sorted(set(measured) & set(predicted))
        if not zones:
            raise MixedZones(f"no common zone: measured {sorted(measured)}, predicted {sorted(predicted)}")
    spec = HistogramSpec.uniform(float(params["bin_width"]), float(params["max_duration"]),
                                 overflow_policy=params["overflow"])
    reports = []
    for zone in zones:
        m = _to_minutes(measured[zone])
        p = _to_minutes(predicted[zone])
        binning = binnings.get(zone)
        if binning is None:
            n_max = int(max(t.values.max() for t in m))
            states = params["states"]
            binning = build_state_binning(m, min(n_max + 1, 8) if states is None else int(states))
        reports.append(evaluate_zone(m, p, binning, spec, float(params["threshold"])))
    return reports


def _summarize(reports, out):
    for r in reports:
        dur = ", ".join("-" if v is None else f"{v:.3f}" for v in r.duration_njsd)
        status = "PASS" if r.passed else f"FLAGGED ({len(r.flags)})"
        print(f"{r.zone_id}: max per-minute NJSD {r.max_timeseries_njsd:.3f}; "
              f"duration NJSD [{dur}]; {status}", file=out)


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


# -- commands ---------------------------------------------------------------

def cmd_ingest(args, out) -> int:
    params = resolve_parameters("ingest", args)
    traces, diag = run_ingest(args.input, params)
    oio.save_traces(traces, args.output, _provenance("ingest", params, {"input": args.input}),
                    diag.as_dict())
    days = sum(len(v) for v in traces.values())
    print(f"{len(traces)} zones, {days} zone-days written to {args.output}", file=out)
    return 0


def cmd_train(args, out) -> int:
    params = resolve_parameters("train", args)
    traces = oio.load_traces(args.archive)
    zone = _pick_zone(traces, params["zone"])
    params["zone"] = zone
    model = run_train(traces, zone, params)
    oio.save_model(model, args.output, _provenance("train", params, {"archive": args.archive}))
    print(f"{zone}: {model.n_states}-state model written to {args.output}", file=out)
    return 0


def cmd_generate(args, out) -> int:
    params = resolve_parameters("generate", args)
    model = oio.load_model(args.model)
    days = run_generate(model, params)
    config = _provenance("generate", params, {"model": args.model})
    oio.save_traces({model.zone_id: days}, args.output, config, binnings={model.zone_id: model.binning})
    if args.csv:
        fmt = params["csv_format"]
        if fmt not in ("event_csv", "wide_csv"):
            raise ConfigError(f"unknown csv_format {fmt!r}")
        oio.atomic_write(args.csv, (oio.event_csv if fmt == "event_csv" else oio.wide_csv)(days))
    print(f"{len(days)} days of {model.zone_id} written to {args.output}", file=out)
    return 0


def cmd_evaluate(args, out) -> int:
    params = resolve_parameters("evaluate", args)
    measured = oio.load_traces(args.measured)
    pdoc = oio.load_archive(args.predicted)
    predicted = oio.traces_from_dict(pdoc)
    binnings = oio.archive_binnings(pdoc)
    inputs = {"measured": args.measured, "predicted": args.predicted}
    if args.model:
        model = oio.load_model(args.model)
        binnings[model.zone_id] = model.binning
        inputs["model"] = args.model
    reports = run_evaluate(measured, predicted, binnings, params)
    config = _provenance("evaluate", params, inputs)
    oio.atomic_write(args.output, oio.dumps(oio.reports_to_dict(reports, config)))
    if args.csv:
        oio.atomic_write(args.csv, oio.reports_csv(reports))
    _summarize(reports, out)
    flagged = any(not r.passed for r in reports)
    return EXIT_FLAGGED if flagged and params["strict"] else 0


def cmd_pipeline(args, out) -> int:
    params = resolve_parameters("pipeline", args)
    outdir = Path(args.outdir)
    traces, diag = run_ingest(args.input, params)
    archive = outdir / "measured.json"
    oio.save_traces(traces, archive, _provenance("ingest", params, {"input": args.input}), diag.as_dict())
    zones = [_pick_zone(traces, params["zone"])] if params["zone"] else sorted(traces)
    generated, binnings = {}, {}
    for zone in zones:
        model = run_train(traces, zone, params)
        path = outdir / f"model_{_safe(zone)}.json"
        oio.save_model(model, path, _provenance("train", {**params, "zone": zone}, {"archive": archive}))
        generated[zone] = run_generate(model, params, traces[zone])
        binnings[zone] = model.binning
    oio.save_traces(generated, outdir / "generated.json",
                    _provenance("generate", params, {"archive": archive}), binnings=binnings)
    reports = run_evaluate({z: traces[z] for z in zones}, generated, binnings, {**params, "zone": None})
    config = _provenance("pipeline", params, {"input": args.input})
    oio.atomic_write(outdir / "report.json", oio.dumps(oio.reports_to_dict(reports, config)))
    oio.atomic_write(outdir / "report.csv", oio.reports_csv(reports))
    _summarize(reports, out)
    flagged = any(not r.passed for r in reports)
    return EXIT_FLAGGED if flagged and params["strict"] else 0


# -- parser -----------------------------------------------------------------

def _ingest_flags(p):
    g = p.add_argument_group("ingest")
    g.add_argument("--format", choices=["auto", "wide_csv", "event_csv"],
                   help="input layout (default: detect from the header)")
    g.add_argument("--grid-step", type=int, metavar="MIN", help="grid step in minutes (default 1)")
    g.add_argument("--initial-value", type=int, metavar="N", help="count before the first record (default 0)")
    g.add_argument("--gap-threshold", type=float, metavar="HOURS",
                   help="drop whole days inside logging gaps longer than this; 0 disables (default 24)")
    g.add_argument("--all-days", action="store_true", default=None, help="keep weekends")


def _train_flags(p):
    g = p.add_argument_group("train")
    g.add_argument("--states", "-M", type=int, metavar="M", help="number of states (default min(N+1, 8))")
    g.add_argument("--smoothing", type=float, help="additive smoothing of jump counts (default 0.5)")


def _generate_flags(p):
    g = p.add_argument_group("generate")
    g.add_argument("--n-days", type=int, help="days to generate (default 250)")
    g.add_argument("--seed", type=int, help="random seed (default 0)")
    g.add_argument("--output-step", metavar="MIN",
                   help="output grid step in minutes, or 'auto' to match the measured data "
                        "(default 1; 'auto' in pipeline)")
    g.add_argument("--initial-state", help="'empirical' or a state index")
    g.add_argument("--start-date", help="date of the first generated day (default 2001-01-01)")


def _evaluate_flags(p, with_states=True):
    g = p.add_argument_group("evaluate")
    g.add_argument("--threshold", type=float, help="NJSD flag threshold (default 0.15)")
    g.add_argument("--bin-width", type=float, metavar="MIN", help="duration histogram bin width (default 10)")
    g.add_argument("--max-duration", type=float, metavar="MIN", help="last histogram edge (default 1440)")
    g.add_argument("--overflow", choices=["clamp", "error"], help="durations past the last edge")
    g.add_argument("--strict", action="store_true", default=None, help="exit 3 when anything is flagged")
    if with_states:
        g.add_argument("--states", "-M", type=int, metavar="M",
                       help="states used to bin measured data when no binning is known")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="occmarkov", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", metavar="FILE", help="TOML config or a previous JSON artifact")
        return p

    p = add("ingest", "CSV log to day-trace archive")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _ingest_flags(p)

    p = add("train", "learn a model for one zone of an archive")
    p.add_argument("archive")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--zone")
    _train_flags(p)

    p = add("generate", "sample synthetic days from a model")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--csv", metavar="FILE", help="also export the days as CSV")
    p.add_argument("--csv-format", choices=["event_csv", "wide_csv"])
    _generate_flags(p)

    p = add("evaluate", "score a generated archive against a measured one")
    p.add_argument("measured")
    p.add_argument("predicted")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--csv", metavar="FILE", help="also write tidy CSV")
    p.add_argument("--model", help="take the state binning from this model")
    p.add_argument("--zone")
    _evaluate_flags(p)

    p = add("pipeline", "ingest, train, generate and evaluate in one go")
    p.add_argument("input")
    p.add_argument("-o", "--outdir", required=True)
    p.add_argument("--zone")
    _ingest_flags(p)
    _train_flags(p)
    _generate_flags(p)
    _evaluate_flags(p, with_states=False)
    return parser


COMMANDS = {"ingest": cmd_ingest, "train": cmd_train, "generate": cmd_generate,
            "evaluate": cmd_evaluate, "pipeline": cmd_pipeline}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except OccupancyError as exc:
        code, message = exc.code, str(exc)
    except FileNotFoundError as exc:
        code, message = "FileNotFound", f"{exc.filename}: no such file"
    except (OSError, ValueError) as exc:
        code, message = type(exc).__name__, str(exc)
    print(f"error: {code}: {' '.join(message.split())}", file=err)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
