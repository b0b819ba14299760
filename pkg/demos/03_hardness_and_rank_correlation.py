"""
Hard samples and ranking agreement
==================================

Part one tracks mean loss importance per sample during a proxy run and checks
how many of the hardest samples carry a flipped label.

Part two compares two ways to rank a handful of hyperparameter settings, using
Kendall's tau and Spearman's rho with tie handling.
"""
import numpy as np

from proxyselect import HyperParams, RunConfig, mean_importance_report, run_asp
from proxyselect.analysis import kendall_tau, spearman
from proxyselect.trainer import load_dataset

data = {"kind": "synthetic", "classes": 5, "per_class": 200, "dims": 16,
        "overlap": 0.8, "label_noise": 0.1, "seed": 1, "split": [600, 200, 200]}
cfg = RunConfig(data=data, hyper=HyperParams(epochs=20, learning_rate=0.02), ratio=0.3, seed=4)

# %%
log = run_asp(cfg, track="loss")
report = mean_importance_report(log.importance_history)
dataset = load_dataset(data)
flipped = set(dataset.metadata["flipped"])
train_rows = dataset.train

k = 30
hardest_rows = train_rows[report.hardest(k)]
easiest_rows = train_rows[report.easiest(k)]
print(f"label noise rate in the whole set: {len(flipped) / dataset.n:.2f}")
print(f"flipped among {k} hardest: {np.mean([r in flipped for r in hardest_rows]):.2f}")
print(f"flipped among {k} easiest: {np.mean([r in flipped for r in easiest_rows]):.2f}")

# %%
# Two rankings of six configurations by accuracy. Ties count as neither
# concordant nor discordant under tau-b.
full_data_acc = [0.91, 0.88, 0.88, 0.80, 0.75, 0.70]
proxy_acc = [0.86, 0.87, 0.83, 0.79, 0.79, 0.66]
print(f"\nKendall tau-b: {kendall_tau(full_data_acc, proxy_acc):.3f}")
print(f"Spearman rho:  {spearman(full_data_acc, proxy_acc):.3f}")
