"""
Scoring generated occupancy against measured occupancy.

Two statistics are compared with the normalized Jensen-Shannon distance:

* the daily profile, i.e. for every minute the distribution of the binned
  state across days;
* per state, the distribution of how long the state is held.

Sojourns that run into midnight are joined with the next day when the next
trace is the following calendar date, so overnight absences are measured in
full. Runs that touch the edge of such a block of consecutive dates have an
unknown length and are left out.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain import StateBinning, _runs
from .errors import EmptyTraces, MixedZones, NoSojourns, ShapeMismatch
from .ingest import DayTrace
from .metrics import (
    DiscreteDistribution,
    HistogramSpec,
    align,
    default_duration_spec,
    histogram,
    njsd,
    njsd_rows,
)

DEFAULT_THRESHOLD = 0.15


@dataclass
class OccupancyProfile:
    zone_id: str
    per_minute_state_probs: np.ndarray  # (minutes, M)
    n_days: int

    @property
    def n_states(self) -> int:
        return self.per_minute_state_probs.shape[1]


def _zone_of(traces: Sequence[DayTrace]) -> str:
    if not traces:
        raise EmptyTraces("no day traces")
    zones = {t.zone_id for t in traces}
    if len(zones) > 1:
        raise MixedZones(f"traces from several zones: {sorted(zones)}")
    return next(iter(zones))


def occupancy_profile(traces: Sequence[DayTrace], binning: StateBinning) -> OccupancyProfile:
    """Fraction of days in each state, minute by minute."""
    zone = _zone_of(traces)
    lengths = {len(t.values) for t in traces}
    if len(lengths) > 1:
        raise ShapeMismatch(f"traces of different lengths: {sorted(lengths)}")
    states = binning.to_states(np.stack([t.values for t in traces]))
    m = binning.n_states
    probs = np.stack([(states == s).mean(axis=0) for s in range(m)], axis=1)
    return OccupancyProfile(zone, probs, len(traces))


def _check_profiles(measured: OccupancyProfile, predicted: OccupancyProfile):
    a, b = measured.per_minute_state_probs, predicted.per_minute_state_probs
    if a.shape != b.shape:
        raise ShapeMismatch(f"profile shapes differ: {a.shape} vs {b.shape}")


def timeseries_njsd(measured: OccupancyProfile, predicted: OccupancyProfile) -> np.ndarray:
    """NJSD between the categorical state distributions at every minute."""
    _check_profiles(measured, predicted)
    return njsd_rows(measured.per_minute_state_probs, predicted.per_minute_state_probs)


def state_timeseries_njsd(measured: OccupancyProfile, predicted: OccupancyProfile) -> np.ndarray:
    """Per-state NJSD of the occupied/not-occupied Bernoulli pairs, shape ``(minutes, M)``."""
    _check_profiles(measured, predicted)
    a, b = measured.per_minute_state_probs, predicted.per_minute_state_probs
    pa = np.stack([a, 1 - a], axis=-1).clip(0, 1)
    pb = np.stack([b, 1 - b], axis=-1).clip(0, 1)
    return njsd_rows(pa, pb)


def sojourn_durations(traces: Sequence[DayTrace], binning: StateBinning) -> dict[int, np.ndarray]:
    """Uncensored holding times (minutes) per state, joining consecutive dates."""
    _zone_of(traces)
    ordered = sorted(traces, key=lambda t: t.date)
    blocks = [[ordered[0]]]
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.date - prev.date == dt.timedelta(days=1):
            blocks[-1].append(cur)
        else:
            blocks.append([cur])
    out: dict[int, list] = {s: [] for s in range(binning.n_states)}
    for block in blocks:
        states = binning.to_states(np.concatenate([t.values for t in block]))
        starts, stops = _runs(states)
        step = 1440 / len(block[0].values)
        for a, b in zip(starts[1:-1], stops[1:-1]):
            out[int(states[a])].append((b - a) * step)
    return {s: np.asarray(v, dtype=float) for s, v in out.items()}


def duration_distribution(traces: Sequence[DayTrace], binning: StateBinning, state: int,
                          spec: HistogramSpec | None = None) -> DiscreteDistribution:
    """Histogram of the uncensored holding times of ``state``."""
    if not 0 <= state < binning.n_states:
        raise ValueError(f"state {state} out of range")
    durations = sojourn_durations(traces, binning)[state]
    if durations.size == 0:
        raise NoSojourns(f"state {state} has no uncensored sojourn")
    return histogram(durations, spec or default_duration_spec())


@dataclass
class EvaluationReport:
    """Measured-vs-predicted comparison for one zone.

    ``duration_njsd[s]`` is None when neither ensemble has an uncensored
    sojourn in state ``s`` and 1.0 when only one of them has. Flags cover the
    categorical per-minute NJSD and the per-state duration NJSD; the per-state
    Bernoulli curves are reported but not flagged.
    """

    zone_id: str
    threshold: float
    timeseries_njsd: np.ndarray
    state_timeseries_njsd: np.ndarray
    duration_njsd: list
    duration_distributions: list  # per state: (measured, predicted), either may be None
    measured_profile: OccupancyProfile
    predicted_profile: OccupancyProfile
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flags

    @property
    def max_timeseries_njsd(self) -> float:
        return float(self.timeseries_njsd.max())

    def to_dict(self) -> dict:
        def dist(d):
            return None if d is None else {"support": list(d.support), "mass": d.mass.tolist()}

        return {
            "zone_id": self.zone_id,
            "threshold": self.threshold,
            "passed": self.passed,
            "n_days": {"measured": self.measured_profile.n_days,
                       "predicted": self.predicted_profile.n_days},
            "summary": {
                "max_timeseries_njsd": self.max_timeseries_njsd,
                "mean_timeseries_njsd": float(self.timeseries_njsd.mean()),
                "duration_njsd": list(self.duration_njsd),
            },
            "timeseries_njsd": self.timeseries_njsd.tolist(),
            "state_timeseries_njsd": self.state_timeseries_njsd.T.tolist(),
            "measured_state_probs": self.measured_profile.per_minute_state_probs.T.tolist(),
            "predicted_state_probs": self.predicted_profile.per_minute_state_probs.T.tolist(),
            "duration_distributions": [
                {"state": s, "measured": dist(a), "predicted": dist(b)}
                for s, (a, b) in enumerate(self.duration_distributions)
            ],
            "flags": [{"statistic": s, "index": i, "value": v} for s, i, v in self.flags],
        }

    def tidy_rows(self):
        """``(minute, statistic, value)`` rows for plotting."""
        m = self.measured_profile.n_states
        for t in range(len(self.timeseries_njsd)):
            yield t, "njsd", float(self.timeseries_njsd[t])
            for s in range(m):
                yield t, f"njsd_state_{s}", float(self.state_timeseries_njsd[t, s])
                yield t, f"measured_p_state_{s}", float(self.measured_profile.per_minute_state_probs[t, s])
                yield t, f"predicted_p_state_{s}", float(self.predicted_profile.per_minute_state_probs[t, s])


def flag_statistics(timeseries: np.ndarray, durations: Sequence, threshold: float) -> list:
    flags = [("timeseries_njsd", int(t), float(v))
             for t, v in enumerate(timeseries) if v > threshold]
    flags += [("duration_njsd", s, float(v))
              for s, v in enumerate(durations) if v is not None and v > threshold]
    return flags


def evaluate_zone(measured: Sequence[DayTrace], predicted: Sequence[DayTrace], binning: StateBinning,
                  spec: HistogramSpec | None = None, threshold: float = DEFAULT_THRESHOLD) -> EvaluationReport:
    """Profile and duration NJSD of ``predicted`` against ``measured``."""
    spec = spec or default_duration_spec()
    zm, zp = _zone_of(measured), _zone_of(predicted)
    if zm != zp:
        raise MixedZones(f"measured zone {zm!r} differs from predicted zone {zp!r}")
    pm = occupancy_profile(measured, binning)
    pp = occupancy_profile(predicted, binning)
    ts = timeseries_njsd(pm, pp)
    per_state = state_timeseries_njsd(pm, pp)

    dm = sojourn_durations(measured, binning)
    dp = sojourn_durations(predicted, binning)
    scores, dists = [], []
    for s in range(binning.n_states):
        a = histogram(dm[s], spec) if dm[s].size else None
        b = histogram(dp[s], spec) if dp[s].size else None
        if a is None and b is None:
            scores.append(None)
        elif a is None or b is None:
            scores.append(1.0)
        else:
            a, b = align(a, b)
            scores.append(njsd(a, b))
        dists.append((a, b))
    return EvaluationReport(
        zone_id=zm, threshold=float(threshold), timeseries_njsd=ts, state_timeseries_njsd=per_state,
        duration_njsd=scores, duration_distributions=dists, measured_profile=pm,
        predicted_profile=pp, flags=flag_statistics(ts, scores, threshold),
    )
