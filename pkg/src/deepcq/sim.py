"""Slotted MANET simulator running the CQ+ packet/ACK state machine.

One slot is one packet duration. Per slot the engine generates traffic (until
``t_max``), moves the nodes, recomputes unit-disk connectivity and runs one
transmit phase in which every node with a queued packet makes exactly one
unicast-or-broadcast transmission of its head packet. ACKs are instantaneous
and lossless.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from . import metrics as ev
from .config import ScenarioConfig, check, resolve_flows, stream
from .metrics import EpisodeMetrics, TraceEvent
from .mobility import (NodeKinematics, RegionLayout, band_bounds, gauss_markov_step,
                       initial_kinematics, random_waypoint_step, region_multiplier)
from .policy import (BROADCAST, UNICAST, PolicyWeights, broadcast_probabilities,
                     build_observation, candidates)
from .tables import (AckValues, RoutingTable, best_next_hop, compute_ack_values,
                     cq_plus_broadcast_probability, update_on_ack, update_on_failure)

PacketId = Tuple[int, int]


@dataclass
class Packet:
    flow: int
    seq: int
    source: int
    destination: int
    path: Tuple[int, ...]
    arrived_via_broadcast: bool = False
    birth_slot: int = 0
    # transition indices of the forwarding hops, for delivery credit
    credit: Tuple[int, ...] = ()

    @property
    def id(self) -> PacketId:
        return self.flow, self.seq


@dataclass
class NodeState:
    id: int
    table: RoutingTable
    queue: Deque[Packet] = field(default_factory=deque)
    seen: Set[PacketId] = field(default_factory=set)
    prev_action: int = UNICAST
    obs_cache: Dict[int, np.ndarray] = field(default_factory=dict)


@dataclass(frozen=True)
class Incoming:
    ack: Optional[AckValues]
    enqueued: bool


@dataclass(frozen=True)
class TransmitDecision:
    node: int
    slot: int
    action: int
    target: Optional[int]
    forced: bool = False


# policies ----------------------------------------------------------------

class CQPolicy:
    """Plain CQ routing: always unicast to the best next hop."""

    name = "cq"
    needs_observation = False

    def broadcast_probability(self, obs, c_best):
        return np.zeros(len(c_best)), None, None


class CQPlusPolicy:
    name = "cq+"
    needs_observation = False

    def __init__(self, epsilon: float):
        self.epsilon = epsilon

    def broadcast_probability(self, obs, c_best):
        return np.array([cq_plus_broadcast_probability(c, self.epsilon) for c in c_best]), \
            None, None


class NeuralPolicy:
    """Shared-weight MLP policy used by every node."""

    name = "deepcq+"
    needs_observation = True

    def __init__(self, weights: PolicyWeights):
        self.weights = weights

    def broadcast_probability(self, obs, c_best):
        return broadcast_probabilities(self.weights, obs)


# episode recorder ----------------------------------------------------------

@dataclass
class Recorder:
    """Per-decision trajectory data, one row per transmit decision."""

    obs: List[np.ndarray] = field(default_factory=list)
    action: List[int] = field(default_factory=list)
    logp: List[float] = field(default_factory=list)
    value: List[float] = field(default_factory=list)
    agent: List[int] = field(default_factory=list)
    slot: List[int] = field(default_factory=list)
    c_best: List[float] = field(default_factory=list)
    n_ack: List[int] = field(default_factory=list)
    delivered: List[bool] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.action)


# core operations -----------------------------------------------------------

def adjacency(positions: np.ndarray, radio_range: float) -> np.ndarray:
    pos = np.asarray(positions, dtype=float)
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    adj = d2 <= radio_range * radio_range
    np.fill_diagonal(adj, False)
    return adj


def connectivity(positions: np.ndarray, radio_range: float) -> List[Set[int]]:
    """Unit-disk neighbor sets; distance exactly ``radio_range`` counts as linked."""
    adj = adjacency(positions, radio_range)
    return [set(np.flatnonzero(row).tolist()) for row in adj]


def handle_incoming(node: NodeState, packet: Packet, broadcast: bool = False) -> Incoming:
    """Receive one data packet copy whose last path entry is the sender.

    Returns the ACK (or ``None``) and whether a copy was queued. The caller
    deals with delivery bookkeeping when ``node`` is the destination.
    """
    if packet.path:
        node.table.neighbors.add(packet.path[-1])
    if node.id in packet.path:
        return Incoming(None, False)
    d = packet.destination
    if packet.id in node.seen:
        return Incoming(compute_ack_values(node.table, d, node.table.neighbors), False)
    node.seen.add(packet.id)
    if node.id == d:
        return Incoming(AckValues(1.0, 1.0), False)
    node.queue.append(Packet(packet.flow, packet.seq, packet.source, d,
                             packet.path + (node.id,), broadcast, packet.birth_slot,
                             packet.credit))
    return Incoming(compute_ack_values(node.table, d, node.table.neighbors), True)


class Simulation:
    """One episode's mutable state."""

    def __init__(self, cfg: ScenarioConfig, policy, record: bool = False,
                 trace: bool = False, check_invariants: bool = False):
        self.cfg = check(cfg)
        self.policy = policy
        self.flows = resolve_flows(cfg)
        self.rng_mobility = stream(cfg.seed, "mobility")
        self.rng_links = stream(cfg.seed, "links")
        self.rng_policy = stream(cfg.seed, "policy")
        self.arena = cfg.arena
        self.layout = RegionLayout()
        self.nodes = [NodeState(i, RoutingTable(i, cfg.h_max, cfg.decay))
                      for i in range(cfg.n_nodes)]
        self.kin = initial_kinematics(self._place(), cfg.mobility, stream(cfg.seed, "placement"),
                                      self.arena, cfg.mean_speed * cfg.dynamic_scale,
                                      self._speed_range())
        self.metrics = EpisodeMetrics()
        self.recorder = Recorder() if record else None
        self.events: Optional[List[TraceEvent]] = [] if trace else None
        self.check_invariants = check_invariants
        self.slot = 0
        self.delivered: Set[PacketId] = set()
        self.copies: Dict[PacketId, int] = {}
        self.next_seq = [0] * len(self.flows)
        self.adj = adjacency(self.kin.position, cfg.radio_range)

    # setup helpers
    def _speed_range(self):
        lo, hi = self.cfg.speed_range
        s = self.cfg.dynamic_scale
        return lo * s, hi * s

    def _place(self) -> np.ndarray:
        cfg = self.cfg
        if cfg.positions is not None:
            return np.array(cfg.positions, dtype=float)
        rng = stream(cfg.seed, "placement")
        width, height = self.arena.size
        pos = rng.uniform((0.0, 0.0), (width, height), size=(cfg.n_nodes, 2))
        sources = {f.source for f in self.flows}
        dests = {f.destination for f in self.flows} - sources
        for band, group in ((0, sorted(sources)), (4, sorted(dests))):
            lo, hi = band_bounds(self.arena, band)
            for i in group:
                pos[i, 0] = rng.uniform(lo, hi)
        return pos

    # tracing
    def _emit(self, node: int, kind: str, pid: PacketId, peer=None, hops=None):
        if self.events is not None:
            self.events.append(TraceEvent(self.slot, node, kind, pid, peer, hops))

    # per-slot phases
    def generate_traffic(self) -> None:
        for fi, f in enumerate(self.flows):
            if self.slot >= f.offset and (self.slot - f.offset) % f.inter_arrival == 0:
                seq = self.next_seq[fi]
                self.next_seq[fi] += 1
                p = Packet(fi, seq, f.source, f.destination, (f.source,), False, self.slot)
                src = self.nodes[f.source]
                src.seen.add(p.id)
                src.queue.append(p)
                self.copies[p.id] = 1
                self.metrics.packets_entered += 1
                self._emit(f.source, ev.GENERATE, p.id)

    def move(self) -> None:
        cfg = self.cfg
        if cfg.mobility == "gauss_markov":
            region = region_multiplier(self.layout, self.kin.position, self.arena)
            self.kin = gauss_markov_step(self.kin, cfg.alpha_gm, cfg.mean_speed * cfg.dynamic_scale,
                                         cfg.speed_variance * cfg.dynamic_scale, region,
                                         self.rng_mobility, self.arena, cfg.heading_std)
        elif cfg.mobility == "random_waypoint":
            self.kin = random_waypoint_step(self.kin, self.arena, self._speed_range(),
                                            self.rng_mobility)
        self.adj = adjacency(self.kin.position, cfg.radio_range)

    def decide(self) -> List[TransmitDecision]:
        """Sample every backlogged node's action against the slot-start state."""
        active = [n for n in self.nodes if n.queue]
        if not active:
            return []
        k = self.cfg.k
        targets, c_best, obs = [], [], []
        for n in active:
            d = n.queue[0].destination
            t = best_next_hop(n.table, d, candidates(n.table, n.queue[0].path))
            targets.append(t)
            c_best.append(0.0 if t is None else n.table.get(t, d).c)
            if self.policy.needs_observation or self.recorder is not None:
                obs.append(build_observation(n, d, n.obs_cache, k))
        obs_arr = np.array(obs) if obs else None
        p_bc, logp, values = self.policy.broadcast_probability(obs_arr, c_best)
        decisions = []
        for idx, n in enumerate(active):
            a = BROADCAST if self.rng_policy.random() < p_bc[idx] else UNICAST
            forced = a == UNICAST and targets[idx] is None
            decisions.append(TransmitDecision(n.id, self.slot, BROADCAST if forced else a,
                                              targets[idx], forced))
            if self.recorder is not None:
                r = self.recorder
                r.obs.append(obs_arr[idx])
                r.action.append(a)
                if logp is not None:
                    r.logp.append(float(logp[idx, a]))
                    r.value.append(float(values[idx]))
                else:
                    p = p_bc[idx] if a == BROADCAST else 1.0 - p_bc[idx]
                    r.logp.append(math.log(p) if p > 0 else -math.inf)
                    r.value.append(0.0)
                r.agent.append(n.id)
                r.slot.append(self.slot)
                r.c_best.append(c_best[idx])
                r.n_ack.append(0)
                r.delivered.append(False)
        return decisions

    def _link_up(self, i: int, j: int) -> bool:
        if not self.adj[i, j]:
            return False
        rel = self.cfg.link_reliability
        return rel >= 1.0 or self.rng_links.random() < rel

    def _credit(self, credit: Tuple[int, ...]) -> None:
        if self.recorder is not None:
            for idx in credit:
                self.recorder.delivered[idx] = True

    def apply(self, decisions: Sequence[TransmitDecision], first_index: int) -> None:
        """Carry out the sampled transmissions in node-id order."""
        m = self.metrics
        tx_this_slot = 0
        for di, dec in enumerate(decisions):
            node = self.nodes[dec.node]
            pkt = node.queue[0]
            d = pkt.destination
            rec_idx = first_index + di if self.recorder is not None else None
            broadcast = dec.action == BROADCAST
            m.transmissions += 1
            tx_this_slot += 1
            if broadcast:
                m.broadcasts += 1
                self._emit(node.id, ev.TX_BROADCAST, pkt.id)
                if dec.forced:
                    self._emit(node.id, ev.FORCED_BROADCAST, pkt.id)
                receivers = [j for j in np.flatnonzero(self.adj[node.id]).tolist()
                             if self._link_up(node.id, j)]
            else:
                m.unicasts += 1
                self._emit(node.id, ev.TX_UNICAST, pkt.id, peer=dec.target)
                receivers = [dec.target] if self._link_up(node.id, dec.target) else []
            outgoing = pkt if rec_idx is None else Packet(
                pkt.flow, pkt.seq, pkt.source, d, pkt.path, pkt.arrived_via_broadcast,
                pkt.birth_slot, pkt.credit + (rec_idx,))
            acks = 0
            for j in receivers:
                rx = self.nodes[j]
                fresh_at_dest = j == d and pkt.id not in rx.seen
                res = handle_incoming(rx, outgoing, broadcast)
                if res.ack is None:
                    m.dropped_loop += 1
                    self._emit(j, ev.DROP_LOOP, pkt.id, peer=node.id)
                    continue
                if fresh_at_dest:
                    self.delivered.add(pkt.id)
                    m.delivered_unique += 1
                    m.hop_sum += len(outgoing.path)
                    self._emit(j, ev.DELIVER, pkt.id, peer=node.id, hops=len(outgoing.path))
                    self._credit(outgoing.credit)
                elif res.enqueued:
                    self.copies[pkt.id] = self.copies.get(pkt.id, 0) + 1
                    self._emit(j, ev.ENQUEUE, pkt.id, peer=node.id)
                else:
                    m.dropped_duplicate += 1
                    if j == d:
                        m.duplicate_deliveries += 1
                        self._emit(j, ev.DUP_DELIVER, pkt.id, peer=node.id)
                    self._emit(j, ev.DROP_DUPLICATE, pkt.id, peer=node.id)
                acks += 1
                m.acks += 1
                self._emit(node.id, ev.ACK, pkt.id, peer=j)
                update_on_ack(node.table, j, d, res.ack)
                node.table.neighbors.add(j)
            if not broadcast and acks == 0:
                m.failures += 1
                self._emit(node.id, ev.FAIL, pkt.id, peer=dec.target)
                update_on_failure(node.table, dec.target, d)
            if acks:
                node.queue.popleft()
                self._emit(node.id, ev.FORWARDED, pkt.id)
                left = self.copies[pkt.id] - 1
                self.copies[pkt.id] = left
                if left == 0 and pkt.id not in self.delivered:
                    m.orphaned += 1
                    self._emit(node.id, ev.ORPHAN, pkt.id)
            node.prev_action = dec.action
            if rec_idx is not None:
                self.recorder.n_ack[rec_idx] = acks
        m.per_slot_transmissions.append(tx_this_slot)

    def queued_unique(self) -> int:
        return sum(1 for pid, c in self.copies.items() if c > 0 and pid not in self.delivered)

    def accounting(self) -> Dict[str, int]:
        """Unique-packet accounting recomputed from the queues themselves."""
        in_queue = set()
        for n in self.nodes:
            for p in n.queue:
                in_queue.add(p.id)
        queued = len(in_queue - self.delivered)
        return {"entered": self.metrics.packets_entered,
                "delivered": len(self.delivered),
                "queued": queued,
                "orphaned": self.metrics.orphaned}

    def _check(self) -> None:
        a = self.accounting()
        if a["entered"] != a["delivered"] + a["queued"] + a["orphaned"]:
            raise AssertionError(f"packet accounting broken at slot {self.slot}: {a}")
        for n in self.nodes:
            ids = [p.id for p in n.queue]
            if len(ids) != len(set(ids)):
                raise AssertionError(f"duplicate queue entry at node {n.id}")
            for p in n.queue:
                if len(set(p.path)) != len(p.path):
                    raise AssertionError(f"repeated node in path {p.path}")
                if p.id not in n.seen:
                    raise AssertionError("queued packet missing from seen-set")

    def step(self) -> None:
        if self.slot < self.cfg.t_max:
            self.generate_traffic()
        if self.slot > 0 and self.cfg.mobility != "static":
            self.move()
        first = len(self.recorder) if self.recorder is not None else 0
        self.apply(self.decide(), first)
        if self.check_invariants:
            self._check()
        self.slot += 1

    def done(self) -> bool:
        if self.slot >= self.cfg.episode_cap:
            return True
        return self.slot >= self.cfg.t_max and not any(n.queue for n in self.nodes)

    def run(self) -> EpisodeMetrics:
        while not self.done():
            self.step()
        self.metrics.slots = self.slot
        self.metrics.retained = self.queued_unique()
        return self.metrics


def run_episode(cfg: ScenarioConfig, policy, record: bool = False, trace: bool = False,
                check_invariants: bool = False):
    """Run one episode; returns ``(metrics, recorder or None)``."""
    sim = Simulation(cfg, policy, record=record, trace=trace, check_invariants=check_invariants)
    m = sim.run()
    return m, sim.recorder


def make_policy(name: str, cfg: ScenarioConfig, weights: Optional[PolicyWeights] = None):
    if name == "cq":
        return CQPolicy()
    if name == "cq+":
        return CQPlusPolicy(cfg.epsilon)
    if name == "deepcq+":
        if weights is None:
            raise ValueError("deepcq+ needs a weight set")
        return NeuralPolicy(weights)
    raise ValueError(f"unknown policy {name!r}")
