"""
Reading occupancy logs and putting them on a uniform time grid.

Two CSV layouts are understood:

``wide_csv``
    ``timestamp,<zone_1>,...,<zone_k>``, one row per sampling instant.
``event_csv``
    ``timestamp,zone,value``, one row per reported state change.

Timestamps are naive local times (ISO-8601 or ``YYYY-MM-DD HH:MM``). Values are
held constant until the next record of the same zone (zero-order hold).
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .errors import (
    EmptyInput,
    MalformedRow,
    NegativeValue,
    UnparseableTimestamp,
)

logger = logging.getLogger(__name__)

MINUTE = dt.timedelta(minutes=1)
DAY = dt.timedelta(days=1)
FORMATS = ("wide_csv", "event_csv")


@dataclass(frozen=True, order=True)
class OccupancyRecord:
    timestamp: dt.datetime
    zone_id: str
    value: int


@dataclass
class ZoneSeries:
    """Grid-aligned occupancy values of one zone.

    ``times`` holds the grid instant of every value. A freshly regularized
    series is contiguous from ``times[0]`` with spacing ``grid_step``;
    filtering weekdays leaves whole-day holes.
    """

    zone_id: str
    grid_step: dt.timedelta
    times: np.ndarray  # datetime64[s]
    values: np.ndarray  # int64

    @property
    def start(self):
        return self.times[0].astype(dt.datetime) if len(self.times) else None

    def __len__(self):
        return len(self.values)


@dataclass
class DayTrace:
    """Occupancy values for one zone over one calendar day, midnight to midnight."""

    date: dt.date
    zone_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if np.any(self.values < 0):
            raise ValueError("occupancy values must be non-negative")

    def __eq__(self, other):
        if not isinstance(other, DayTrace):
            return NotImplemented
        return (self.date == other.date and self.zone_id == other.zone_id
                and np.array_equal(self.values, other.values))


@dataclass
class IngestDiagnostics:
    """Counters collected while turning raw logs into day traces."""

    zones: list = field(default_factory=list)
    days: dict = field(default_factory=dict)
    partial_days: dict = field(default_factory=dict)
    partial_points: dict = field(default_factory=dict)
    gap_excluded_days: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "zones": list(self.zones),
            "days": dict(self.days),
            "partial_days": dict(self.partial_days),
            "partial_points": dict(self.partial_points),
            "gap_excluded_days": {
                z: [d.isoformat() for d in ds] for z, ds in self.gap_excluded_days.items()
            },
        }


def parse_timestamp(text: str, row: int | None = None) -> dt.datetime:
    text = text.strip()
    try:
        ts = dt.datetime.fromisoformat(text)
    except ValueError:
        try:
            ts = dt.datetime.strptime(text, "%Y-%m-%d %H:%M")
        except ValueError:
            raise UnparseableTimestamp(f"cannot parse timestamp {text!r}", row) from None
    # naive local time: drop any offset without converting
    return ts.replace(tzinfo=None)


def _parse_value(text: str, row: int) -> int:
    text = text.strip()
    try:
        value = int(text)
    except ValueError:
        try:
            f = float(text)
        except ValueError:
            raise MalformedRow(f"non-numeric value {text!r}", row) from None
        if not f.is_integer():
            raise MalformedRow(f"non-integer value {text!r}", row) from None
        value = int(f)
    if value < 0:
        raise NegativeValue(f"negative occupancy value {value}", row)
    return value


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8-sig"))
    if isinstance(source, (str, os.PathLike)):
        return open(source, encoding="utf-8-sig", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def parse_records(source, format: str) -> list[OccupancyRecord]:
    """Parse a CSV occupancy log into records.

    Parameters
    ----------
    source : bytes, path, or binary/text file object
        UTF-8 CSV with a header row.
    format : {"wide_csv", "event_csv"}

    Returns
    -------
    list of OccupancyRecord
        Sorted by (zone, timestamp); records sharing a timestamp keep file order.
    """
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    stream = _text_stream(source)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise EmptyInput("input has no header row")
    header = [h.strip() for h in header]
    if header[0].lower() != "timestamp":
        raise MalformedRow("first column must be 'timestamp'", 1)

    records = []
    if format == "wide_csv":
        zones = header[1:]
        if not zones or len(set(zones)) != len(zones) or not all(zones):
            raise MalformedRow("wide header needs unique, non-empty zone names", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise MalformedRow(f"expected {len(header)} fields, got {len(row)}", row_no)
            ts = parse_timestamp(row[0], row_no)
            for zone, cell in zip(zones, row[1:]):
                records.append(OccupancyRecord(ts, zone, _parse_value(cell, row_no)))
    else:
        if [h.lower() for h in header[:3]] != ["timestamp", "zone", "value"] or len(header) != 3:
            raise MalformedRow("event header must be 'timestamp,zone,value'", 1)
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise MalformedRow(f"expected 3 fields, got {len(row)}", row_no)
            zone = row[1].strip()
            if not zone:
                raise MalformedRow("empty zone", row_no)
            records.append(
                OccupancyRecord(parse_timestamp(row[0], row_no), zone, _parse_value(row[2], row_no))
            )
    if not records:
        raise EmptyInput("input has no data rows")
    # stable sort keeps file order among equal timestamps (last event wins)
    records.sort(key=lambda r: (r.zone_id, r.timestamp))
    return records


def _by_zone(records: Iterable[OccupancyRecord]) -> dict[str, list[OccupancyRecord]]:
    zones: dict[str, list[OccupancyRecord]] = defaultdict(list)
    for r in records:
        zones[r.zone_id].append(r)
    return dict(zones)


def _floor(ts: dt.datetime, step: dt.timedelta, origin: dt.datetime) -> dt.datetime:
    return origin + ((ts - origin) // step) * step


def infer_sampling_step(records: Iterable[OccupancyRecord]) -> dt.timedelta | None:
    """Most common positive spacing between consecutive records of a zone."""
    spacing = Counter()
    for recs in _by_zone(records).values():
        for a, b in zip(recs, recs[1:]):
            if b.timestamp > a.timestamp:
                spacing[b.timestamp - a.timestamp] += 1
    return spacing.most_common(1)[0][0] if spacing else None


def regularize(records: list[OccupancyRecord], grid_step: dt.timedelta = MINUTE, *,
               start: dt.datetime | None = None, end: dt.datetime | None = None,
               initial_value: int = 0) -> list[ZoneSeries]:
    """Forward-fill records onto a uniform grid, one series per zone.

    Every grid point carries the value of the latest record at or before it;
    points before a zone's first record carry ``initial_value``. Several
    records inside one grid step collapse to the last one.

    By default all zones share one grid from midnight of the earliest record
    up to (exclusive) one step past the latest record.
    """
    if not records:
        raise EmptyInput("no records to regularize")
    if grid_step <= dt.timedelta(0) or DAY % grid_step:
        raise ValueError("grid_step must be positive and divide 24 h")
    zones = _by_zone(records)
    first = min(r.timestamp for r in records)
    last = max(r.timestamp for r in records)
    if start is None:
        start = dt.datetime.combine(first.date(), dt.time())
    if end is None:
        end = _floor(last, grid_step, start) + grid_step
    n = max(int((end - start) // grid_step), 0)
    step_s = int(grid_step.total_seconds())
    times = np.datetime64(start, "s") + np.arange(n) * np.timedelta64(step_s, "s")

    out = []
    for zone in sorted(zones):
        recs = zones[zone]
        offsets = np.array([(r.timestamp - start).total_seconds() for r in recs])
        vals = np.array([r.value for r in recs], dtype=np.int64)
        # index of the last record at or before each grid point
        grid_s = np.arange(n) * step_s
        idx = np.searchsorted(offsets, grid_s, side="right") - 1
        values = np.where(idx >= 0, vals[np.maximum(idx, 0)], initial_value).astype(np.int64)
        out.append(ZoneSeries(zone, grid_step, times.copy(), values))
    return out


def filter_weekdays(series: ZoneSeries) -> ZoneSeries:
    """Drop every grid point falling on a Saturday or Sunday."""
    days = series.times.astype("datetime64[D]")
    # 1970-01-01 was a Thursday; Monday = 0
    weekday = (days.astype(np.int64) + 3) % 7
    keep = weekday < 5
    return ZoneSeries(series.zone_id, series.grid_step, series.times[keep], series.values[keep])


def split_days(series: ZoneSeries, diagnostics: IngestDiagnostics | None = None,
               exclude: Iterable[dt.date] = ()) -> list[DayTrace]:
    """Cut a series into complete calendar days.

    Days missing any grid point are dropped, logged and counted in
    ``diagnostics``. Dates in ``exclude`` are dropped silently apart from the
    diagnostics count of gap exclusions kept by the caller.
    """
    if DAY % series.grid_step:
        raise ValueError("grid_step must divide 24 h")
    per_day = DAY // series.grid_step
    step_s = int(series.grid_step.total_seconds())
    exclude = set(exclude)
    traces = []
    partial_days = partial_points = 0
    if len(series):
        days = series.times.astype("datetime64[D]")
        boundaries = np.flatnonzero(days[1:] != days[:-1]) + 1
        starts = np.concatenate([[0], boundaries])
        stops = np.concatenate([boundaries, [len(days)]])
        for a, b in zip(starts, stops):
            day = days[a].astype(dt.date)
            expected = days[a] + np.arange(per_day) * np.timedelta64(step_s, "s")
            if b - a != per_day or not np.array_equal(series.times[a:b], expected):
                partial_days += 1
                partial_points += b - a
                continue
            if day in exclude:
                continue
            traces.append(DayTrace(day, series.zone_id, series.values[a:b].copy()))
    if partial_days:
        logger.warning("zone %s: dropped %d partial day(s)", series.zone_id, partial_days)
    if diagnostics is not None:
        zid = series.zone_id
        diagnostics.partial_days[zid] = diagnostics.partial_days.get(zid, 0) + partial_days
        diagnostics.partial_points[zid] = diagnostics.partial_points.get(zid, 0) + partial_points
    return traces


def find_gap_days(records: list[OccupancyRecord], threshold: dt.timedelta = DAY) -> dict[str, list[dt.date]]:
    """Calendar days lying entirely inside a reporting gap longer than ``threshold``.

    A gap runs between consecutive records of one zone. A day is enclosed when
    it starts strictly after the earlier record and ends no later than the
    following one.
    """
    out = {}
    for zone, recs in _by_zone(records).items():
        days = set()
        for a, b in zip(recs, recs[1:]):
            if b.timestamp - a.timestamp <= threshold:
                continue
            day = a.timestamp.date() + DAY
            while dt.datetime.combine(day, dt.time()) + DAY <= b.timestamp:
                days.add(day)
                day += DAY
        if days:
            out[zone] = sorted(days)
    return out


def load_day_traces(source, format: str, *, grid_step: dt.timedelta = MINUTE,
                    initial_value: int = 0, gap_threshold: dt.timedelta | None = DAY,
                    weekdays_only: bool = True) -> tuple[dict[str, list[DayTrace]], IngestDiagnostics]:
    """Parse, regularize, filter and split a log file in one go.

    For ``wide_csv`` the last sample is assumed to hold for one sampling period
    (the most common spacing), so a log ending at 23:45 on a 15-min schedule
    still yields a complete final day.
    """
    records = parse_records(source, format)
    end = None
    if format == "wide_csv":
        period = infer_sampling_step(records) or grid_step
        last = max(r.timestamp for r in records)
        first = min(r.timestamp for r in records)
        origin = dt.datetime.combine(first.date(), dt.time())
        end = _floor(last + max(period, grid_step) - grid_step, grid_step, origin) + grid_step
    gaps = find_gap_days(records, gap_threshold) if gap_threshold is not None else {}
    diagnostics = IngestDiagnostics()
    traces = {}
    for series in regularize(records, grid_step, end=end, initial_value=initial_value):
        if weekdays_only:
            series = filter_weekdays(series)
        excluded = gaps.get(series.zone_id, [])
        days = split_days(series, diagnostics, exclude=excluded)
        traces[series.zone_id] = days
        diagnostics.zones.append(series.zone_id)
        diagnostics.days[series.zone_id] = len(days)
        if excluded:
            diagnostics.gap_excluded_days[series.zone_id] = excluded
    return traces, diagnostics
