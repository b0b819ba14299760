"""
Schedules and selection
=======================

How many samples does each epoch see, and which importance metric decides
which ones? This script prints the ratio schedule and the metric mixture for a
short run, then shows how softmax sampling spreads selections across samples.

Run with ``python3 demos/01_schedules_and_selection.py``.
"""
import numpy as np

from proxyselect.scheduler import MetricMixture, RatioSchedule, schedule_table
from proxyselect.selector import inclusion_frequencies, sampling_probabilities, select_proxy

# %%
# A dynamic schedule starts at twice the target ratio and shrinks linearly, so
# the average over the run lands close to the target.
n_epochs, n = 12, 1000
dynamic = RatioSchedule("dynamic", 0.3, n_epochs)
static = RatioSchedule("static", 0.3, n_epochs)
mixture = MetricMixture(n_epochs)

print("epoch  ratio   m    random  grad   loss   entropy  pred")
for row in schedule_table(dynamic, mixture, n):
    epoch, ratio, m, *probs = row
    print(f"{epoch:5d}  {ratio:.3f}  {m:4d}  " + "  ".join(f"{p:.3f}" for p in probs))
print("mean dynamic ratio:", dynamic.ratios().mean().round(4), " static:", static.ratios().mean().round(4))

# %%
# Selection draws m distinct samples with probability proportional to
# exp(importance). High-importance samples dominate but low ones keep a chance.
values = np.array([3.0, 2.0, 1.0, 0.0, 0.0, -1.0])
print("\nsoftmax weights:   ", np.round(sampling_probabilities(values), 3))

rng = np.random.default_rng(0)
print("one draw of m=3:   ", select_proxy(values, 3, "prob", rng).ids)
print("top-m draw of m=3: ", select_proxy(values, 3, "topm").ids)

# Inclusion rates over many draws: every sample shows up some of the time.
rates = inclusion_frequencies(values, 3, 20_000, rng)
print("inclusion rates:   ", np.round(rates, 3))
