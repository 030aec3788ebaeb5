"""Regenerate the dataset-shaped fixture files in this directory.

``mahdavi_wide.csv``: 9 zones sampled every 15 minutes, 2013-01-01 to 2013-01-14.
``dong_events.csv``: 6 offices, event-triggered with second resolution,
2015-04-13 to 2015-04-24.

Both are synthetic (drawn from the office ground-truth chain), only the
layout follows the public datasets.
"""

import datetime as dt
import sys
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE.parent))

from groundtruth import office_model  # noqa: E402
from occmarkov.simulate import day_rng, discretize, sample_path  # noqa: E402

MAHDAVI_ZONES = ["KI", "O1_1", "O1_2", "O1_3", "O1_4", "O1_5", "O2", "O3", "O4"]
DONG_ZONES = ["Z1", "Z2", "Z3", "Z4", "Z5", "Z6"]


def mahdavi(path):
    model = office_model()
    start = dt.datetime(2013, 1, 1)
    cols = []
    for z in range(len(MAHDAVI_ZONES)):
        days = [discretize(sample_path(model, day_rng(100 + z, d)), 15) for d in range(14)]
        cols.append(np.concatenate(days))
    with open(path, "w") as fh:
        fh.write("timestamp," + ",".join(MAHDAVI_ZONES) + "\n")
        for i, row in enumerate(np.stack(cols, axis=1)):
            ts = start + dt.timedelta(minutes=15 * i)
            fh.write(f"{ts:%Y-%m-%d %H:%M}," + ",".join(map(str, row)) + "\n")


def dong(path):
    model = office_model()
    start = dt.datetime(2015, 4, 13)
    rows = []
    for z, zone in enumerate(DONG_ZONES):
        rows.append((start, zone, 0))
        for d in range(12):
            p = sample_path(model, day_rng(200 + z, d), initial_state=0)
            midnight = start + dt.timedelta(days=d)
            for t, s in zip(p.times[1:], p.states[1:]):
                rows.append((midnight + dt.timedelta(seconds=int(t * 60)), zone, int(s)))
        rows.append((start + dt.timedelta(days=12) - dt.timedelta(seconds=1), zone, rows[-1][2]))
    rows.sort(key=lambda r: r[0])
    with open(path, "w") as fh:
        fh.write("timestamp,zone,value\n")
        for ts, zone, v in rows:
            fh.write(f"{ts:%Y-%m-%d %H:%M:%S},{zone},{v}\n")


if __name__ == "__main__":
    mahdavi(HERE / "mahdavi_wide.csv")
    dong(HERE / "dong_events.csv")
