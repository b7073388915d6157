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
# # One episode, slot by slot
#
# A four-node diamond: node 0 reaches 1 and 2, which both reach 3. Every node
# broadcasts, so the trace shows all three reception outcomes: a loop drop
# (no ACK), a duplicate drop (ACK) and delivery (ACK of (1, 1)).

# %%
import numpy as np

from deepcq import metrics as M
from deepcq.config import Flow, ScenarioConfig
from deepcq.sim import Simulation, make_policy


class AlwaysBroadcast:
    name = "always-broadcast"
    needs_observation = False

    def broadcast_probability(self, obs, c_best):
        return np.ones(len(c_best)), None, None


diamond = ScenarioConfig(n_nodes=4, flows=(Flow(0, 3, inter_arrival=2),), t_max=1,
                         mobility="static",
                         positions=((100.0, 250.0), (300.0, 350.0), (300.0, 150.0),
                                    (500.0, 250.0)))
sim = Simulation(diamond, AlwaysBroadcast(), trace=True)
m = sim.run()
for e in sim.events:
    print(e.slot, e.node, e.kind, "" if e.peer is None else e.peer)

# %%
print(m)
print("goodput", M.goodput(m), "OH", M.normalized_overhead(m, 4))

# %% [markdown]
# A mobile 12-node network under CQ+. The accounting check runs every slot:
# every packet that entered is delivered, still queued somewhere, or orphaned.

# %%
cfg = ScenarioConfig(n_nodes=12, n_flows=2, seed=3)
sim = Simulation(cfg, make_policy("cq+", cfg), check_invariants=True)
m = sim.run()
print(sim.accounting())
print(M.result_row(m, cfg.n_nodes, policy="cq+", seed=cfg.seed))
