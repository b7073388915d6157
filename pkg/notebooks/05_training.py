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
# # Training with PPO
#
# First the mimic reward, which pays each action with the probability CQ+
# would have given it. After training, the network's broadcast probability
# should rise as the best neighbor's confidence falls.

# %%
import numpy as np
from scipy.stats import spearmanr

from deepcq.config import ScenarioConfig
from deepcq.policy import broadcast_probabilities
from deepcq.sim import make_policy, run_episode
from deepcq.trainer import PPOConfig, RewardConfig, train

base = ScenarioConfig(n_nodes=8, n_flows=1, mobility="static", t_max=100, episode_cap=400,
                      region_scale=0.5)
res = train(base, RewardConfig(mode="srr_mimic"),
            PPOConfig(learning_rate=1e-3, total_steps=200_000, seed=7),
            scenario_fn=lambda e: base.with_(seed=1000 + e))
for row in res.curves[::8]:
    print({k: round(v, 3) for k, v in row.items()})

# %%
obs, c_best = [], []
for s in range(20):
    cfg = base.with_(seed=50_000 + s)
    _, rec = run_episode(cfg, make_policy("deepcq+", cfg, res.weights), record=True)
    obs += rec.obs
    c_best += rec.c_best
p, _, _ = broadcast_probabilities(res.weights, np.array(obs))
print("Spearman rho vs 1 - c_best:", round(spearmanr(p, 1 - np.array(c_best)).correlation, 3))

# %% [markdown]
# The overhead reward instead pays for deliveries and charges for
# transmissions nobody acknowledged and for every ACK a transmission drew.
# The full-length run behind the acceptance gate lives in
# `configs/headline.yaml`; here is a short taste of it.

# %%
cfg = ScenarioConfig(n_nodes=12, n_flows=1)
res = train(cfg, RewardConfig(mode="overhead_min", w2=0.5, w3=1.0),
            PPOConfig(learning_rate=1e-3, total_steps=30_000),
            scenario_fn=lambda e: cfg.with_(seed=10_000 + e))
for row in res.curves:
    print({k: round(v, 3) for k, v in row.items()})
