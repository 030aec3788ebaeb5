"""
Files: model JSON, day-trace archives, CSV exports and evaluation reports.

Floats are written with Python's shortest round-trip repr, so every model and
archive reloads bit-for-bit. Keys are emitted in a fixed order and no wall
clock time is recorded, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .chain import InhomogeneousModel, SlotModel, StateBinning
from .errors import SchemaError
from .ingest import DayTrace

MODEL_SCHEMA = "occmarkov.model"
TRACES_SCHEMA = "occmarkov.traces"
REPORT_SCHEMA = "occmarkov.report"
SCHEMA_VERSION = 1


def atomic_write(path, data: str | bytes):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(doc, compact: bool = False) -> str:
    if compact:
        return json.dumps(doc, separators=(",", ":"), allow_nan=False) + "\n"
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


# -- models -----------------------------------------------------------------

def model_to_dict(model: InhomogeneousModel, config: dict | None = None) -> dict:
    doc = {
        "schema": MODEL_SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "zone_id": model.zone_id,
        "slot_minutes": model.slot_minutes,
        "binning": binning_to_dict(model.binning),
        "initial_distribution": model.initial_distribution.tolist(),
        "slots": [
            {
                "slot_index": s.slot_index,
                "transition_matrix": s.transition_matrix.tolist(),
                "holding_rate": s.holding_rate.tolist(),
                "support_mask": s.support_mask.tolist(),
                "entry_remap": None if s.entry_remap is None else list(s.entry_remap),
            }
            for s in model.slots
        ],
        "metadata": model.metadata,
    }
    if config is not None:
        doc["config"] = config
    return doc


class _Reader:
    # field access that reports the full path of whatever is missing or wrong
    def __init__(self, doc, path=""):
        self.doc = doc
        self.path = path

    def get(self, key, kind=None, optional=False):
        where = f"{self.path}.{key}" if self.path else str(key)
        if not isinstance(self.doc, dict) or key not in self.doc:
            if optional:
                return None
            raise SchemaError(f"missing field '{where}'")
        value = self.doc[key]
        if kind is not None and not isinstance(value, kind):
            raise SchemaError(f"field '{where}' has wrong type {type(value).__name__}")
        return value

    def sub(self, key, index=None):
        where = f"{self.path}.{key}" if self.path else str(key)
        value = self.get(key)
        if index is not None:
            value = value[index]
            where = f"{where}[{index}]"
        return _Reader(value, where)


def _check_schema(r: _Reader, name: str):
    schema = r.get("schema", str)
    if schema != name:
        raise SchemaError(f"field 'schema' is {schema!r}, expected {name!r}")
    version = r.get("schema_version", int)
    if version != SCHEMA_VERSION:
        raise SchemaError(f"field 'schema_version' is {version}, this build reads {SCHEMA_VERSION}")


def model_from_dict(doc: dict) -> InhomogeneousModel:
    r = _Reader(doc)
    _check_schema(r, MODEL_SCHEMA)
    binning = binning_from_dict(r.get("binning", dict))
    raw_slots = r.get("slots", list)
    slots = []
    for i in range(len(raw_slots)):
        s = r.sub("slots", i)
        try:
            slot = SlotModel(
                s.get("slot_index", int),
                np.asarray(s.get("transition_matrix", list), dtype=float),
                np.asarray(s.get("holding_rate", list), dtype=float),
                np.asarray(s.get("support_mask", list), dtype=bool),
                s.get("entry_remap"),
            )
        except (ValueError, TypeError) as exc:
            raise SchemaError(f"field '{s.path}': {exc}") from None
        m = binning.n_states
        if slot.transition_matrix.shape != (m, m):
            raise SchemaError(f"field '{s.path}.transition_matrix' must be {m}x{m}")
        if slot.holding_rate.shape != (m,) or np.any(slot.holding_rate < 0):
            raise SchemaError(f"field '{s.path}.holding_rate' must hold {m} non-negative rates")
        if slot.support_mask.shape != (m,):
            raise SchemaError(f"field '{s.path}.support_mask' must hold {m} flags")
        if np.any(np.abs(slot.transition_matrix.sum(axis=1) - 1) > 1e-9):
            raise SchemaError(f"field '{s.path}.transition_matrix' rows must sum to 1")
        if slot.entry_remap is not None and (len(slot.entry_remap) != m
                                             or not all(0 <= x < m for x in slot.entry_remap)):
            raise SchemaError(f"field '{s.path}.entry_remap' must map {m} states into 0..{m - 1}")
        slots.append(slot)
    try:
        return InhomogeneousModel(
            zone_id=r.get("zone_id", str),
            binning=binning,
            slots=tuple(slots),
            initial_distribution=np.asarray(r.get("initial_distribution", list), dtype=float),
            slot_minutes=r.get("slot_minutes", int),
            metadata=r.get("metadata", dict, optional=True) or {},
        )
    except (ValueError, TypeError) as exc:
        raise SchemaError(str(exc)) from None


def save_model(model: InhomogeneousModel, path, config: dict | None = None):
    atomic_write(path, dumps(model_to_dict(model, config)))


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None


def load_model(path) -> InhomogeneousModel:
    return model_from_dict(_load_json(path))


# -- trace archives ---------------------------------------------------------

def _encode_runs(values: np.ndarray) -> list:
    change = np.flatnonzero(values[1:] != values[:-1]) + 1
    starts = np.concatenate([[0], change])
    return [[int(i), int(values[i])] for i in starts]


def _decode_runs(runs: list, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.int64)
    for (a, v), nxt in zip(runs, runs[1:] + [[n, None]]):
        out[a:nxt[0]] = v
    return out


def binning_to_dict(binning: StateBinning) -> dict:
    return {"count_to_state": list(binning.count_to_state),
            "representative": list(binning.representative)}


def binning_from_dict(doc: dict, where: str = "binning") -> StateBinning:
    r = _Reader(doc, where)
    try:
        return StateBinning(r.get("count_to_state", list), r.get("representative", list))
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"field '{where}': {exc}") from None


def traces_to_dict(traces: dict[str, Sequence[DayTrace]], config: dict | None = None,
                   diagnostics: dict | None = None, binnings: dict | None = None) -> dict:
    """Archive document; each day is stored run-length encoded as ``[index, value]`` pairs.

    ``binnings`` (zone to StateBinning) is recorded for generated ensembles so
    that evaluation can bin measured data the same way.
    """
    zones = {}
    for zone in sorted(traces):
        zones[zone] = [
            {"date": t.date.isoformat(), "n": len(t.values), "runs": _encode_runs(t.values)}
            for t in sorted(traces[zone], key=lambda t: t.date)
        ]
    doc = {"schema": TRACES_SCHEMA, "schema_version": SCHEMA_VERSION,
           "library_version": __version__, "zones": zones}
    if config is not None:
        doc["config"] = config
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics
    if binnings is not None:
        doc["binnings"] = {z: binning_to_dict(b) for z, b in sorted(binnings.items())}
    return doc


def traces_from_dict(doc: dict) -> dict[str, list[DayTrace]]:
    r = _Reader(doc)
    _check_schema(r, TRACES_SCHEMA)
    out = {}
    for zone, days in r.get("zones", dict).items():
        out[zone] = []
        for i, day in enumerate(days):
            d = _Reader(day, f"zones.{zone}[{i}]")
            try:
                date = dt.date.fromisoformat(d.get("date", str))
                values = _decode_runs(d.get("runs", list), d.get("n", int))
            except (ValueError, TypeError, IndexError) as exc:
                raise SchemaError(f"field '{d.path}': {exc}") from None
            out[zone].append(DayTrace(date, zone, values))
    return out


def archive_binnings(doc: dict) -> dict[str, StateBinning]:
    return {z: binning_from_dict(b, f"binnings.{z}") for z, b in doc.get("binnings", {}).items()}


def save_traces(traces, path, config=None, diagnostics=None, binnings=None):
    atomic_write(path, dumps(traces_to_dict(traces, config, diagnostics, binnings), compact=True))


def load_traces(path) -> dict[str, list[DayTrace]]:
    return traces_from_dict(_load_json(path))


def load_archive(path) -> dict:
    """Raw archive document (traces plus embedded config and diagnostics)."""
    return _load_json(path)


# -- CSV exports ------------------------------------------------------------

def _day_start(d: dt.date) -> dt.datetime:
    return dt.datetime.combine(d, dt.time())


def _fmt(ts: dt.datetime) -> str:
    return ts.strftime("%Y-%m-%d %H:%M")


def event_csv(traces: Iterable[DayTrace]) -> str:
    """``timestamp,zone,value`` rows: each day's midnight value, every change,
    and the final minute of the last day of each zone (so re-ingestion sees
    the last day as complete)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "zone", "value"])
    by_zone: dict[str, list[DayTrace]] = {}
    for t in traces:
        by_zone.setdefault(t.zone_id, []).append(t)
    for zone in sorted(by_zone):
        days = sorted(by_zone[zone], key=lambda t: t.date)
        for i, t in enumerate(days):
            step = dt.timedelta(minutes=1440 // len(t.values))
            for idx, value in _encode_runs(t.values):
                w.writerow([_fmt(_day_start(t.date) + idx * step), zone, value])
            if i == len(days) - 1:
                w.writerow([_fmt(_day_start(t.date) + (len(t.values) - 1) * step), zone, int(t.values[-1])])
    return buf.getvalue()


def wide_csv(traces: Iterable[DayTrace]) -> str:
    """``timestamp,<zone>...`` with one row per grid instant of every day present."""
    by_key: dict[tuple, DayTrace] = {}
    zones: set = set()
    for t in traces:
        by_key[(t.date, t.zone_id)] = t
        zones.add(t.zone_id)
    zones = sorted(zones)
    dates = sorted({d for d, _ in by_key})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", *zones])
    for d in dates:
        missing = [z for z in zones if (d, z) not in by_key]
        if missing:
            raise ValueError(f"{d}: no trace for zone(s) {missing}")
        day = [by_key[(d, z)] for z in zones]
        n = len(day[0].values)
        step = dt.timedelta(minutes=1440 // n)
        start = _day_start(d)
        cols = np.stack([t.values for t in day], axis=1)
        for i in range(n):
            w.writerow([_fmt(start + i * step), *cols[i].tolist()])
    return buf.getvalue()


# -- reports ----------------------------------------------------------------

def reports_to_dict(reports: Sequence, config: dict | None = None) -> dict:
    doc = {"schema": REPORT_SCHEMA, "schema_version": SCHEMA_VERSION,
           "library_version": __version__,
           "passed": all(r.passed for r in reports),
           "zones": [r.to_dict() for r in reports]}
    if config is not None:
        doc["config"] = config
    return doc


def reports_csv(reports: Sequence) -> str:
    """Tidy ``zone,minute,statistic,value`` rows; duration scores have no minute."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["zone", "minute", "statistic", "value"])
    for report in reports:
        for minute, stat, value in report.tidy_rows():
            w.writerow([report.zone_id, minute, stat, repr(value)])
        for s, v in enumerate(report.duration_njsd):
            w.writerow([report.zone_id, "", f"duration_njsd_state_{s}", "" if v is None else repr(float(v))])
    return buf.getvalue()
