"""
Divergences between occupancy distributions
===========================================
"""

import numpy as np

from occmarkov.metrics import DiscreteDistribution, HistogramSpec, histogram, js_distance, kl_divergence, njsd

p = DiscreteDistribution((0, 1), np.array([0.5, 0.5]))
q = DiscreteDistribution((0, 1), np.array([0.25, 0.75]))
print("KL(p||q) =", kl_divergence(p, q))
print("KL(q||p) =", kl_divergence(q, p), " (not symmetric)")

# NJSD is bounded by 1 and reaches it for disjoint supports
a = DiscreteDistribution((0, 1), np.array([1.0, 0.0]))
b = DiscreteDistribution((0, 1), np.array([0.0, 1.0]))
print("NJSD(p, q) =", njsd(p, q))
print("NJSD(a, b) =", njsd(a, b))
print("JS distance obeys the triangle inequality:",
      js_distance(a, b) <= js_distance(a, p) + js_distance(p, b))

###############################################################################
# Duration histograms share a fixed bin grid so that two ensembles align.

rng = np.random.default_rng(0)
spec = HistogramSpec.uniform(10, 240)
short = histogram(rng.exponential(20, 2000), spec)
long = histogram(rng.exponential(40, 2000), spec)
print("NJSD between 20 and 40 minute mean spells:", round(njsd(short, long), 3))
