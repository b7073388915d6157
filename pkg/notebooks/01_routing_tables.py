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
# # Routing tables
#
# Every node keeps an (H, C) pair per (neighbor, destination): H estimates the
# hop count through that neighbor and C says how much to trust it. Entries
# nobody has touched read as `(h_max, 0)`.

# %%
from deepcq.tables import (AckValues, RoutingTable, best_next_hop, compute_ack_values,
                           cq_plus_broadcast_probability, update_on_ack, update_on_failure)

t = RoutingTable(owner=0)
print(t.get(5, 9))

# %% [markdown]
# An ACK pulls the entry toward the values the neighbor reported. A confident
# ACK moves H most of the way in a single step; C creeps up at rate `decay`.

# %%
for _ in range(3):
    e = update_on_ack(t, 5, 9, AckValues(h_ack=2.0, c_ack=0.9))
    print(f"h={e.h:.3f} c={e.c:.3f}")

# %% [markdown]
# A failed unicast only shrinks C.

# %%
e = update_on_failure(t, 5, 9)
print(f"h={e.h:.3f} c={e.c:.3f}")

# %% [markdown]
# Next-hop choice minimises `h * (1 - c)`, so a longer route the node trusts
# can beat a short one it does not.

# %%
update_on_ack(t, 7, 9, AckValues(h_ack=1.0, c_ack=0.0))
for j in (5, 7):
    print(j, t.get(j, 9), round(t.key(j, 9), 3))
print("best:", best_next_hop(t, 9, {5, 7}))
print("ack this node would send upstream:", compute_ack_values(t, 9, {5, 7}))

# %% [markdown]
# CQ+ broadcasts with a probability that falls from 1 to `epsilon` as the
# best neighbor's confidence rises.

# %%
for c in (0.0, 0.25, 0.5, 0.75, 1.0):
    print(c, round(cq_plus_broadcast_probability(c, 0.05), 4))
