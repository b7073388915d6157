# ---
# jupyter:
#   jupytext:
#     formats: ipynb,py:percent
#     text_representation:
#       extension: .py
#       format_name: percent
#       format_version: '1.3'
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Paired evaluation
#
# `evaluate_matrix` runs CQ+ and the learned policy on the same seeds over a
# grid of network sizes and flow counts and returns one row per episode.
# The same code backs `deepcq evaluate`.

# %%
import numpy as np

from deepcq import metrics as M
from deepcq.cli import evaluate_matrix
from deepcq.config import ScenarioConfig
from deepcq.policy import init_weights

w = init_weights(4, np.random.default_rng(0))
rows = evaluate_matrix(w, [12, 20], [1, 2], [1.0], range(3), base=ScenarioConfig(t_max=100))
print(M.format_rows(rows[:4]))

# %%
for n in (12, 20):
    for pol in ("cq+", "deepcq+"):
        sel = [r for r in rows if r["n_nodes"] == n and r["policy"] == pol]
        g = np.mean([r["goodput"] for r in sel])
        oh = np.mean([r["oh"] for r in sel if r["oh"] is not None])
        print(f"N={n} {pol:8s} goodput={g:.3f} OH={oh:.3f}")

# %% [markdown]
# From a shell the equivalent is:
#
# ```
# deepcq evaluate --weights weights.json --n 12 20 --flows 1 2 --seeds 0:3 --out eval.csv
# ```
