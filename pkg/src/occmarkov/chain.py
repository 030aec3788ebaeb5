"""
Learning the inhomogeneous continuous-time Markov chain.

A day is cut into 48 half-hour slots. Each slot gets its own homogeneous
chain: a jump-chain transition matrix and one exponential holding rate per
state. Occupant counts are first grouped into at most ``M`` states of roughly
equal occurrence mass.

Time is measured in minutes. A trace value at minute ``t`` is the state held
over ``[t, t + 1)``; a change between minutes ``t - 1`` and ``t`` is a jump
attributed to the slot containing minute ``t - 1``.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import __version__
from .errors import EmptyTraces, MixedZones, NoSupportedStates, TooFewCounts
from .ingest import DayTrace

MINUTES_PER_DAY = 1440
SLOT_MINUTES = 30
N_SLOTS = MINUTES_PER_DAY // SLOT_MINUTES
DEFAULT_SMOOTHING = 0.5
DEFAULT_MAX_STATES = 8


@dataclass(frozen=True)
class StateBinning:
    """Map between raw occupant counts ``0..N`` and model states ``0..M-1``.

    ``representative[s]`` is the count emitted when generating state ``s``
    (the occurrence-weighted median count of the bin).
    """

    count_to_state: tuple
    representative: tuple

    def __post_init__(self):
        c2s = tuple(int(s) for s in self.count_to_state)
        rep = tuple(int(c) for c in self.representative)
        object.__setattr__(self, "count_to_state", c2s)
        object.__setattr__(self, "representative", rep)
        if not c2s or c2s[0] != 0:
            raise ValueError("count 0 must map to state 0")
        if any(b < a for a, b in zip(c2s, c2s[1:])):
            raise ValueError("binning must be monotone")
        if set(c2s) != set(range(len(rep))):
            raise ValueError("binning must be onto 0..M-1")
        for s, c in enumerate(rep):
            if not (0 <= c < len(c2s)) or c2s[c] != s:
                raise ValueError(f"representative count {c} does not belong to state {s}")

    @classmethod
    def identity(cls, n_max: int) -> "StateBinning":
        return cls(tuple(range(n_max + 1)), tuple(range(n_max + 1)))

    @property
    def n_states(self) -> int:
        return len(self.representative)

    @property
    def max_count(self) -> int:
        return len(self.count_to_state) - 1

    def bins(self) -> list[list[int]]:
        out = [[] for _ in range(self.n_states)]
        for c, s in enumerate(self.count_to_state):
            out[s].append(c)
        return out

    def to_states(self, counts) -> np.ndarray:
        """Bin counts; counts above ``N`` fall into the top state."""
        counts = np.asarray(counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ValueError("negative occupant count")
        lut = np.asarray(self.count_to_state, dtype=np.int64)
        return lut[np.minimum(counts, self.max_count)]

    def to_counts(self, states) -> np.ndarray:
        return np.asarray(self.representative, dtype=np.int64)[np.asarray(states)]


class Sojourn(NamedTuple):
    state: int
    entry: int  # minute of day the state was entered
    duration: int  # minutes
    censored_start: bool  # run touches midnight at the start of the day
    censored_end: bool  # run touches midnight at the end of the day
    next_state: int | None  # None when censored at the end


@dataclass(frozen=True)
class SlotModel:
    """Homogeneous chain for one half-hour slot.

    ``transition_matrix[y]`` is the jump-chain row of state ``y``. Rows of
    states that are never left in the slot (including unobserved ones) are
    the absorbing row ``e_y`` with ``holding_rate[y] == 0``. ``entry_remap``
    is filled in by :func:`resolve_conflicts`.
    """

    slot_index: int
    transition_matrix: np.ndarray
    holding_rate: np.ndarray
    support_mask: np.ndarray
    entry_remap: tuple | None = None

    def __post_init__(self):
        for name in ("transition_matrix", "holding_rate", "support_mask"):
            arr = np.array(getattr(self, name), dtype=bool if name == "support_mask" else float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.entry_remap is not None:
            object.__setattr__(self, "entry_remap", tuple(int(s) for s in self.entry_remap))

    @property
    def n_states(self) -> int:
        return len(self.holding_rate)

    def __eq__(self, other):
        if not isinstance(other, SlotModel):
            return NotImplemented
        return (self.slot_index == other.slot_index
                and np.array_equal(self.transition_matrix, other.transition_matrix)
                and np.array_equal(self.holding_rate, other.holding_rate)
                and np.array_equal(self.support_mask, other.support_mask)
                and self.entry_remap == other.entry_remap)

    def generator(self) -> np.ndarray:
        """Rate matrix ``Q = diag(rate) (P - I)``."""
        p = np.array(self.transition_matrix)
        return self.holding_rate[:, None] * (p - np.eye(self.n_states))


@dataclass(frozen=True)
class InhomogeneousModel:
    """Full-day model: 48 stitched slot chains plus binning and provenance."""

    zone_id: str
    binning: StateBinning
    slots: tuple
    initial_distribution: np.ndarray
    slot_minutes: int = SLOT_MINUTES
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(self.slots))
        init = np.array(self.initial_distribution, dtype=float)
        init.setflags(write=False)
        object.__setattr__(self, "initial_distribution", init)
        if len(self.slots) * self.slot_minutes != MINUTES_PER_DAY:
            raise ValueError(f"expected {MINUTES_PER_DAY // self.slot_minutes} slots, got {len(self.slots)}")
        m = self.binning.n_states
        if init.shape != (m,) or abs(init.sum() - 1) > 1e-9 or np.any(init < 0):
            raise ValueError("initial distribution must be a distribution over the model states")
        for k, slot in enumerate(self.slots):
            if slot.slot_index != k or slot.n_states != m:
                raise ValueError(f"slot {k} is inconsistent with the model")

    @property
    def n_states(self) -> int:
        return self.binning.n_states

    @property
    def resolved(self) -> bool:
        return all(s.entry_remap is not None for s in self.slots)

    def __eq__(self, other):
        if not isinstance(other, InhomogeneousModel):
            return NotImplemented
        return (self.zone_id == other.zone_id and self.binning == other.binning
                and self.slots == other.slots and self.slot_minutes == other.slot_minutes
                and np.array_equal(self.initial_distribution, other.initial_distribution))


# -- binning ----------------------------------------------------------------

def greedy_partition(weights, n_bins: int) -> list[int]:
    """Split ``0..len(weights)-1`` into ``n_bins`` contiguous, non-empty ranges.

    Walking up from count 0, the current bin closes as soon as its weight
    reaches (remaining weight) / (remaining bins), or when the counts left
    are only just enough to give every later bin one count. The last bin takes
    whatever remains. Returns the bin index of every count.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w)
    if n_bins < 1 or n_bins > n:
        raise TooFewCounts(f"cannot split {n} counts into {n_bins} states")
    assign = []
    b = 0
    acc = 0.0
    remaining = float(w.sum())
    for c in range(n):
        assign.append(b)
        acc += w[c]
        bins_left = n_bins - b
        if bins_left == 1:
            continue
        counts_after = n - c - 1
        target = remaining / bins_left
        if acc >= target * (1 - 1e-12) or counts_after == bins_left - 1:
            remaining -= acc
            acc = 0.0
            b += 1
    return assign


def _weighted_median(counts: list[int], weights: np.ndarray) -> int:
    w = weights[counts]
    if w.sum() <= 0:
        return counts[(len(counts) - 1) // 2]
    cum = np.cumsum(w) / w.sum()
    return counts[int(np.searchsorted(cum, 0.5 - 1e-12))]


def count_occurrences(day_traces: Sequence[DayTrace]) -> np.ndarray:
    """Number of minutes spent at each occupant count ``0..N``."""
    if not day_traces:
        raise EmptyTraces("no day traces")
    values = np.concatenate([np.asarray(t.values) for t in day_traces])
    return np.bincount(values)


def build_state_binning(day_traces: Sequence[DayTrace], M: int) -> StateBinning:
    """Group counts ``0..N`` into ``M`` contiguous states of near-equal occurrence mass."""
    weights = count_occurrences(day_traces)
    n_max = len(weights) - 1
    if M < 1:
        raise ValueError("M must be positive")
    if M > n_max + 1:
        raise TooFewCounts(f"M={M} exceeds the {n_max + 1} observed counts 0..{n_max}")
    assign = greedy_partition(weights, M)
    bins = [[c for c, b in enumerate(assign) if b == s] for s in range(M)]
    rep = [_weighted_median(cs, weights) for cs in bins]
    return StateBinning(tuple(assign), tuple(rep))


# -- sojourns ---------------------------------------------------------------

def _runs(states: np.ndarray):
    change = np.flatnonzero(states[1:] != states[:-1]) + 1
    starts = np.concatenate([[0], change])
    stops = np.concatenate([change, [len(states)]])
    return starts, stops


def extract_sojourns(trace: DayTrace, binning: StateBinning) -> list[Sojourn]:
    """Maximal constant-state runs of one day after binning."""
    states = binning.to_states(trace.values)
    if len(states) == 0:
        return []
    starts, stops = _runs(states)
    n = len(states)
    out = []
    for i, (a, b) in enumerate(zip(starts, stops)):
        nxt = int(states[b]) if b < n else None
        out.append(Sojourn(int(states[a]), int(a), int(b - a), a == 0, b == n, nxt))
    return out


# -- rates ------------------------------------------------------------------

def exposure_rate(exposure, completed) -> float:
    """Exponential rate MLE from possibly censored holding times.

    ``exposure`` is the observed time of each spell and ``completed`` whether
    its exit was seen. The estimate is (exits seen) / (total time at risk),
    which is unbiased under censoring and equals ``1 / mean`` when nothing is
    censored. Returns 0 when no exit was seen.
    """
    exposure = np.asarray(exposure, dtype=float)
    completed = np.asarray(completed, dtype=bool)
    total = exposure.sum()
    if total <= 0:
        return 0.0
    return float(completed.sum() / total)


def naive_rate(durations) -> float:
    """``1 / mean(durations)``, treating every spell as complete."""
    return float(1.0 / np.mean(np.asarray(durations, dtype=float)))


class _SojournArrays(NamedTuple):
    state: np.ndarray
    entry: np.ndarray
    stop: np.ndarray
    next_state: np.ndarray  # -1 when censored at the end


def _as_arrays(sojourns: Sequence[Sojourn]) -> _SojournArrays:
    if not sojourns:
        e = np.zeros(0, dtype=np.int64)
        return _SojournArrays(e, e, e, e)
    arr = np.array([(s.state, s.entry, s.entry + s.duration,
                     -1 if s.next_state is None or s.censored_end else s.next_state)
                    for s in sojourns], dtype=np.int64)
    return _SojournArrays(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])


def _fit_slot(soj: _SojournArrays, slot_index: int, smoothing: float, n_states: int,
              slot_minutes: int) -> SlotModel:
    lo, hi = slot_index * slot_minutes, (slot_index + 1) * slot_minutes
    overlap = np.clip(np.minimum(soj.stop, hi) - np.maximum(soj.entry, lo), 0, None)
    jumps = soj.next_state >= 0
    jump_slot = (soj.stop - 1) // slot_minutes
    in_slot = jumps & (jump_slot == slot_index)

    matrix = np.eye(n_states)
    rate = np.zeros(n_states)
    support = np.zeros(n_states, dtype=bool)
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (soj.state[in_slot], soj.next_state[in_slot]), 1.0)
    for y in range(n_states):
        mine = (soj.state == y) & (overlap > 0)
        support[y] = mine.any()
    support[soj.next_state[in_slot]] = True

    for y in range(n_states):
        mine = (soj.state == y) & (overlap > 0)
        if not mine.any():
            continue
        rate[y] = exposure_rate(overlap[mine], in_slot[mine])
        if rate[y] == 0:
            continue
        cols = (support | (counts[y] > 0)).copy()
        cols[y] = False
        row = np.where(cols, counts[y] + smoothing, 0.0)
        matrix[y] = row / row.sum()
    return SlotModel(slot_index, matrix, rate, support)


def learn_slot_model(sojourns: Sequence[Sojourn], slot_index: int, smoothing: float = DEFAULT_SMOOTHING,
                     n_states: int | None = None, slot_minutes: int = SLOT_MINUTES) -> SlotModel:
    """Fit the homogeneous chain of one slot from pooled sojourns.

    Jump counts ``y -> x`` whose jump falls in the slot get ``smoothing``
    added on every column that is supported in the slot or observed as a
    target, then the row is normalized over ``x != y``. The holding rate of
    ``y`` is (jumps out of ``y`` in the slot) / (minutes spent in ``y`` in
    the slot).
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    soj = _as_arrays(sojourns)
    if n_states is None:
        n_states = int(max(soj.state.max(initial=0), soj.next_state.max(initial=0))) + 1
    return _fit_slot(soj, slot_index, smoothing, n_states, slot_minutes)


def _nearest_supported(binning: StateBinning, support: np.ndarray, state: int) -> int:
    rep = np.asarray(binning.representative)
    candidates = np.flatnonzero(support)
    dist = np.abs(rep[candidates] - rep[state])
    # argmin returns the first (lowest) state among ties
    return int(candidates[np.argmin(dist)])


def resolve_conflicts(model: InhomogeneousModel) -> InhomogeneousModel:
    """Attach to every slot a remap applied to the state on entering it.

    Supported states map to themselves; an unsupported state maps to the
    supported state with the closest representative count, ties going to the
    lower state.
    """
    slots = []
    remaps = []
    for k, slot in enumerate(model.slots):
        if not slot.support_mask.any():
            raise NoSupportedStates(f"slot {k} supports no state")
        remap = []
        for s in range(model.n_states):
            if slot.support_mask[s]:
                remap.append(s)
            else:
                t = _nearest_supported(model.binning, slot.support_mask, s)
                remap.append(t)
                prev = model.slots[k - 1].support_mask[s] if k > 0 else model.initial_distribution[s] > 0
                if prev:
                    remaps.append({"slot": k, "state": s, "to": t})
        slots.append(replace(slot, entry_remap=tuple(remap)))
    meta = dict(model.metadata)
    meta["remaps"] = remaps
    return replace(model, slots=tuple(slots), metadata=meta)


def learn_model(day_traces: Sequence[DayTrace], M: int | None = None,
                smoothing: float = DEFAULT_SMOOTHING, binning: StateBinning | None = None) -> InhomogeneousModel:
    """Learn, stitch and conflict-resolve the 48-slot model of one zone.

    ``M`` defaults to ``min(N + 1, 8)``. Passing ``binning`` skips the binning
    step (e.g. to reuse the binning of another model).
    """
    if not day_traces:
        raise EmptyTraces("no day traces")
    zones = {t.zone_id for t in day_traces}
    if len(zones) > 1:
        raise MixedZones(f"traces from several zones: {sorted(zones)}")
    for t in day_traces:
        if len(t.values) != MINUTES_PER_DAY:
            raise ValueError(f"day {t.date} has {len(t.values)} values, expected {MINUTES_PER_DAY}")
    if binning is None:
        n_max = int(max(int(np.max(t.values)) for t in day_traces))
        if M is None:
            M = min(n_max + 1, DEFAULT_MAX_STATES)
        binning = build_state_binning(day_traces, M)
    m = binning.n_states

    sojourns = [s for t in day_traces for s in extract_sojourns(t, binning)]
    arrays = _as_arrays(sojourns)
    slots = [_fit_slot(arrays, k, smoothing, m, SLOT_MINUTES) for k in range(N_SLOTS)]

    first = np.bincount(binning.to_states([t.values[0] for t in day_traces]), minlength=m)
    dates = sorted(t.date for t in day_traces)
    metadata = {
        "n_days": len(day_traces),
        "date_range": [dates[0].isoformat(), dates[-1].isoformat()],
        "smoothing": float(smoothing),
        "library_version": __version__,
        "fallback_states": [
            {"slot": s.slot_index, "states": np.flatnonzero(~s.support_mask).tolist()}
            for s in slots if not s.support_mask.all()
        ],
    }
    model = InhomogeneousModel(zone_id=zones.pop(), binning=binning, slots=tuple(slots),
                               initial_distribution=first / first.sum(), metadata=metadata)
    return resolve_conflicts(model)


def homogeneous_model(rates, matrix, *, zone_id: str = "zone", binning: StateBinning | None = None,
                      initial_distribution=None) -> InhomogeneousModel:
    """Model whose 48 slots all share one chain. Handy for tests and demos."""
    rates = np.asarray(rates, dtype=float)
    return piecewise_model([rates] * N_SLOTS, [matrix] * N_SLOTS, zone_id=zone_id,
                           binning=binning, initial_distribution=initial_distribution)


def piecewise_model(rates: Sequence, matrices: Sequence, *, zone_id: str = "zone",
                    binning: StateBinning | None = None, initial_distribution=None) -> InhomogeneousModel:
    """Build a conflict-resolved model from hand-written per-slot rates and jump matrices.

    Every state counts as supported in every slot.
    """
    if len(rates) != N_SLOTS or len(matrices) != N_SLOTS:
        raise ValueError(f"need {N_SLOTS} slots")
    m = len(rates[0])
    if binning is None:
        binning = StateBinning.identity(m - 1)
    slots = []
    for k, (r, p) in enumerate(zip(rates, matrices)):
        r = np.asarray(r, dtype=float)
        p = np.asarray(p, dtype=float)
        if np.any(np.abs(p.sum(axis=1) - 1) > 1e-9):
            raise ValueError(f"slot {k}: rows must sum to 1")
        slots.append(SlotModel(k, p, r, np.ones(m, dtype=bool)))
    if initial_distribution is None:
        initial_distribution = np.eye(m)[0]
    model = InhomogeneousModel(zone_id, binning, tuple(slots), initial_distribution,
                               metadata={"library_version": __version__})
    return resolve_conflicts(model)


def day_dates(start: dt.date, n: int, weekdays_only: bool = True) -> list[dt.date]:
    """``n`` consecutive dates from ``start`` (skipping weekends when asked)."""
    out = []
    d = start
    while len(out) < n:
        if not weekdays_only or d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out
