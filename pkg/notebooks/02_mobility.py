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
# # Mobility
#
# Two models move the nodes: Gauss-Markov, with speed variance set by five
# vertical bands (fastest in the middle), and random waypoint.

# %%
import numpy as np

from deepcq.mobility import (Arena, RegionLayout, gauss_markov_step, initial_kinematics,
                             random_waypoint_step, region_multiplier)

arena = Arena()
layout = RegionLayout()
for x in np.linspace(0, arena.width, 11):
    print(f"x={x:6.0f}  multiplier={region_multiplier(layout, (x, 250.0), arena)}")

# %% [markdown]
# Run 200 slots of each model from the same start and look at how far nodes
# travel and whether any leave the arena.

# %%
rng = np.random.default_rng(0)
start = rng.uniform((0, 0), arena.size, size=(20, 2))
for model in ("gauss_markov", "random_waypoint"):
    r = np.random.default_rng(1)
    k = initial_kinematics(start, model, r, arena, 2.0, (1.0, 3.0))
    for _ in range(200):
        if model == "gauss_markov":
            mult = np.array([region_multiplier(layout, p, arena) for p in k.position])
            k = gauss_markov_step(k, 0.75, 2.0, 1.0, mult, r, arena)
        else:
            k = random_waypoint_step(k, arena, (1.0, 3.0), r)
    moved = np.linalg.norm(k.position - start, axis=1)
    inside = np.all((k.position >= 0) & (k.position <= arena.size))
    print(f"{model:16s} mean displacement {moved.mean():6.1f} m, all inside: {inside}")
