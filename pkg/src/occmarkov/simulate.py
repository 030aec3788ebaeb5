"""
Sampling synthetic occupancy days from a learned model.

Paths are simulated in continuous time. Inside a slot the holding time of the
current state is exponential with that slot's rate; when a holding time runs
past the slot end the process is restarted at the boundary with the next
slot's rate (exact for exponential holding times), after applying the next
slot's entry remap. Jump destinations come from the current slot's row.

Day ``i`` of an ensemble draws from its own PCG64 stream seeded with
``SeedSequence(seed, spawn_key=(i,))``, so any day can be reproduced alone.
"""

from __future__ import annotations

import bisect
import datetime as dt
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain import MINUTES_PER_DAY, InhomogeneousModel, day_dates
from .errors import UnresolvedModel
from .ingest import DayTrace

DEFAULT_START_DATE = dt.date(2001, 1, 1)  # a Monday


@dataclass(frozen=True)
class SimulationConfig:
    n_days: int
    seed: int = 0
    initial_state: str | int = "empirical"
    output_step: int = 1  # minutes
    start_date: dt.date = DEFAULT_START_DATE

    def __post_init__(self):
        if self.n_days < 1:
            raise ValueError("n_days must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.output_step < 1 or 30 % self.output_step:
            raise ValueError("output_step must divide 30 minutes")
        if self.initial_state != "empirical" and not isinstance(self.initial_state, (int, np.integer)):
            raise ValueError("initial_state must be 'empirical' or a state index")


def day_rng(seed: int, day: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(day),))))


class SamplePath(NamedTuple):
    times: np.ndarray  # minutes; times[0] == 0
    states: np.ndarray  # state held from times[i] on


class _Compiled:
    # plain python lists: the sampling loop is scalar and list indexing is
    # much cheaper than numpy scalar access
    def __init__(self, model: InhomogeneousModel):
        if not model.resolved:
            raise UnresolvedModel("model has no conflict resolution; run resolve_conflicts first")
        self.length = model.slot_minutes
        self.rates = [s.holding_rate.tolist() for s in model.slots]
        self.cum_rows = []
        for s in model.slots:
            cum = np.cumsum(s.transition_matrix, axis=1)
            cum[:, -1] = 1.0
            self.cum_rows.append(cum.tolist())
        self.remaps = [list(s.entry_remap) for s in model.slots]
        cum = np.cumsum(model.initial_distribution)
        cum[-1] = 1.0
        self.initial = cum.tolist()
        self.representative = np.asarray(model.binning.representative, dtype=np.int64)


def _compiled(model: InhomogeneousModel) -> _Compiled:
    cache = model.__dict__.get("_compiled_sampler")
    if cache is None:
        cache = _Compiled(model)
        object.__setattr__(model, "_compiled_sampler", cache)
    return cache


def sample_path(model: InhomogeneousModel, rng: np.random.Generator,
                initial_state: int | None = None) -> SamplePath:
    """Continuous-time trajectory over one day, as jump times and states."""
    c = _compiled(model)
    if initial_state is None:
        state = bisect.bisect_right(c.initial, rng.random())
    else:
        state = int(initial_state)
        if not 0 <= state < model.n_states:
            raise ValueError(f"initial state {state} out of range")
    state = c.remaps[0][state]
    times = [0.0]
    states = [state]
    t = 0.0
    k = 0
    n_slots = len(c.rates)
    length = c.length
    while True:
        end = (k + 1) * length
        rate = c.rates[k][state]
        if rate > 0:
            t_next = t + rng.standard_exponential() / rate
        else:
            t_next = math.inf
        if t_next >= end:
            t = end
            k += 1
            if k == n_slots:
                break
            new = c.remaps[k][state]
            if new != state:
                times.append(t)
                states.append(new)
                state = new
            continue
        t = t_next
        state = bisect.bisect_right(c.cum_rows[k][state], rng.random())
        times.append(t)
        states.append(state)
    return SamplePath(np.asarray(times), np.asarray(states, dtype=np.int64))


def discretize(path: SamplePath, output_step: int = 1) -> np.ndarray:
    """State held at each grid instant ``0, step, 2*step, ...`` of the day."""
    grid = np.arange(0, MINUTES_PER_DAY, output_step)
    idx = np.searchsorted(path.times, grid, side="right") - 1
    return path.states[idx]


def sample_day(model: InhomogeneousModel, rng: np.random.Generator, *,
               initial_state: int | None = None, date: dt.date = DEFAULT_START_DATE,
               output_step: int = 1) -> DayTrace:
    """One synthetic day of occupant counts (representative count of each state)."""
    c = _compiled(model)
    states = discretize(sample_path(model, rng, initial_state), output_step)
    return DayTrace(date, model.zone_id, c.representative[states])


def sample_ensemble(model: InhomogeneousModel, config: SimulationConfig) -> list[DayTrace]:
    """``config.n_days`` independent days dated on consecutive weekdays."""
    init = None if config.initial_state == "empirical" else int(config.initial_state)
    dates = day_dates(config.start_date, config.n_days)
    return [
        sample_day(model, day_rng(config.seed, i), initial_state=init, date=d,
                   output_step=config.output_step)
        for i, d in enumerate(dates)
    ]
