# %% [markdown]
# # Error versus rank for the four update cases
#
# `A` is diagonal with entries from U(0, 1) and `z` a unit Gaussian vector
# (scaled by 0.1 for downdates).  For each case we compare the rank-r
# correction with the best rank-r truncation of the exact one.

# %%
import numpy as np

from lowrank_sqrt.experiments import ExperimentSpec, format_csv, run_synthetic

cases = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
ranks = [1, 2, 4, 6, 8, 10, 12]

# %%
for alpha, beta in cases:
    rows = run_synthetic(ExperimentSpec(alpha=alpha, beta=beta, rank_sweep=ranks, tol=1e-12))
    print(f"alpha={alpha:+d} beta={beta:+d}")
    for row in rows:
        print(f"   r={row['r']:2d}  rel error {row['rel_error']:.2e}   optimal {row['optimal_rel_error']:.2e}")

# %% [markdown]
# The same rows as a CSV file (the format the `synthetic` subcommand writes):

# %%
print(format_csv("synthetic", run_synthetic(ExperimentSpec(rank_sweep=[1, 2, 3]))))
