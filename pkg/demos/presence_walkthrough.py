"""
Learning a presence model for a single office
=============================================

A hand-written "true" occupant generates a year of weekdays. We learn a
two-state model from those traces, simulate a fresh year from it and check
how close the two ensembles are.
"""

import numpy as np

from occmarkov.chain import N_SLOTS, learn_model, piecewise_model
from occmarkov.evaluate import evaluate_zone
from occmarkov.simulate import SimulationConfig, sample_ensemble

# rates are per minute: [arrival, departure]; the occupant is in 8h-17h with a lunch break
rates = []
for k in range(N_SLOTS):
    h = k / 2
    if 8 <= h < 17:
        rates.append([1 / 10, 1 / 20] if 12 <= h < 13 else [1 / 8, 1 / 45])
    else:
        rates.append([1 / 20000, 1 / 15])
flip = np.array([[0.0, 1.0], [1.0, 0.0]])
truth = piecewise_model(rates, [flip] * N_SLOTS, zone_id="office")

measured = sample_ensemble(truth, SimulationConfig(250, seed=1))
print(f"{len(measured)} days, first {measured[0].date}, last {measured[-1].date}")

###############################################################################
# Learning. Each 30-minute slot gets its own jump matrix and holding rates.
# Nights are never occupied in the data, so their rates are learned as 0.

model = learn_model(measured, M=2)
for k in (16, 20, 25, 30):
    s = model.slots[k]
    print(f"slot {k:2d} ({k / 2:4.1f}h): arrival {s.holding_rate[0]:.4f}/min "
          f"(true {rates[k][0]:.4f}), departure {s.holding_rate[1]:.4f}/min (true {rates[k][1]:.4f})")

###############################################################################
# A fresh ensemble from the learned model, scored minute by minute.

predicted = sample_ensemble(model, SimulationConfig(250, seed=2))
report = evaluate_zone(measured, predicted, model.binning, threshold=0.15)

prob_m = report.measured_profile.per_minute_state_probs[:, 1]
prob_p = report.predicted_profile.per_minute_state_probs[:, 1]
for h in (3, 9, 12.5, 15, 20):
    t = int(h * 60)
    print(f"{h:5.1f}h  P(present) measured {prob_m[t]:.2f}  predicted {prob_p[t]:.2f}  "
          f"NJSD {report.timeseries_njsd[t]:.3f}")

print("worst per-minute NJSD:", round(report.max_timeseries_njsd, 3))
print("duration NJSD (absent, present):", [round(v, 3) for v in report.duration_njsd])
print("passed" if report.passed else f"{len(report.flags)} statistics above 0.15")
