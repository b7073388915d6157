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
# # The broadcast policy network
#
# Each node describes its head-of-queue packet with 18 numbers: C and
# normalised H of its four best neighbors, how those moved since last time,
# its own previous action and whether the packet arrived by broadcast. The
# same small MLP maps that to P(unicast), P(broadcast) and a value estimate
# for every node, so the input size never depends on N.

# %%
import numpy as np

from deepcq.config import ScenarioConfig
from deepcq.policy import (broadcast_probabilities, init_weights, observation_size,
                           weights_from_text, weights_to_text)
from deepcq.sim import run_episode, make_policy

w = init_weights(4, np.random.default_rng(0))
print("observation size", observation_size(4), "parameters", w.flat().size)
for name, (W, b) in w.layers():
    print(name, W.shape)

# %% [markdown]
# Weights round-trip through a plain JSON document.

# %%
text = weights_to_text(w)
print(text[:120], "...")
assert weights_from_text(text) == w

# %% [markdown]
# The untrained network drives whole episodes at any size.

# %%
for n in (5, 12, 50):
    cfg = ScenarioConfig(n_nodes=n, n_flows=2, t_max=60, seed=n)
    m, rec = run_episode(cfg, make_policy("deepcq+", cfg, w), record=True)
    p, _, _ = broadcast_probabilities(w, np.array(rec.obs))
    print(f"N={n:2d} decisions={len(rec):5d} mean P(broadcast)={p.mean():.3f}")
