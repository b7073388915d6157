"""Confidence/hop-count routing tables and the CQ+ update and decision rules.

Each node owns one :class:`RoutingTable` mapping ``(neighbor, destination)`` to
an :class:`Entry` holding the hop estimate ``h`` and the confidence ``c``.
Entries that were never written read as the default ``(h_max, 0)`` so unknown
routes are always the least preferred.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Set, Tuple

DEFAULT_H_MAX = 16.0
DEFAULT_DECAY = 0.1
DEFAULT_EPSILON = 0.05


@dataclass
class Entry:
    h: float
    c: float


@dataclass(frozen=True)
class AckValues:
    h_ack: float
    c_ack: float


@dataclass
class RoutingTable:
    """Per-node H/C state.

    ``neighbors`` is the set of node ids this node has ever heard from; it is
    the candidate set for next-hop selection.
    """

    owner: int
    h_max: float = DEFAULT_H_MAX
    decay: float = DEFAULT_DECAY
    entries: Dict[Tuple[int, int], Entry] = field(default_factory=dict)
    neighbors: Set[int] = field(default_factory=set)

    def get(self, neighbor: int, destination: int) -> Entry:
        entry = self.entries.get((neighbor, destination))
        if entry is None:
            return Entry(self.h_max, 0.0)
        return entry

    def key(self, neighbor: int, destination: int) -> float:
        entry = self.entries.get((neighbor, destination))
        if entry is None:
            return self.h_max
        return entry.h * (1.0 - entry.c)

    def _entry_for_write(self, neighbor: int, destination: int) -> Entry:
        entry = self.entries.get((neighbor, destination))
        if entry is None:
            entry = Entry(self.h_max, 0.0)
            self.entries[(neighbor, destination)] = entry
        return entry

    def dump(self) -> str:
        """Plain-text dump, one ``neighbor destination h c`` row per entry."""
        lines = [f"# node {self.owner}", "neighbor\tdestination\th\tc"]
        for (j, d), e in sorted(self.entries.items()):
            lines.append(f"{j}\t{d}\t{e.h!r}\t{e.c!r}")
        return "\n".join(lines) + "\n"


def best_next_hop(table: RoutingTable, destination: int,
                  candidates: Iterable[int]) -> Optional[int]:
    """Argmin of ``h * (1 - c)`` over ``candidates``; ties go to the lowest id."""
    best = None
    best_key = 0.0
    for j in candidates:
        k = table.key(j, destination)
        if best is None or k < best_key or (k == best_key and j < best):
            best, best_key = j, k
    return best


def compute_ack_values(table: RoutingTable, destination: int,
                       neighbors_of_j: Iterable[int]) -> AckValues:
    """ACK payload computed by the receiving node ``table.owner``."""
    if table.owner == destination:
        return AckValues(1.0, 1.0)
    k_hat = best_next_hop(table, destination, neighbors_of_j)
    if k_hat is None:
        return AckValues(table.h_max, 0.0)
    e = table.get(k_hat, destination)
    return AckValues(1.0 + e.h, e.c)


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def update_on_ack(table: RoutingTable, neighbor: int, destination: int,
                  ack: AckValues) -> Entry:
    e = table._entry_for_write(neighbor, destination)
    lam = table.decay
    alpha = max(ack.c_ack, 1.0 - e.c)
    e.h = _clamp((1.0 - alpha) * e.h + alpha * ack.h_ack, 1.0, table.h_max)
    e.c = _clamp((1.0 - lam) * e.c + lam * ack.c_ack, 0.0, 1.0)
    return e


def update_on_failure(table: RoutingTable, neighbor: int, destination: int) -> Entry:
    # h cannot be observed without an ACK
    e = table._entry_for_write(neighbor, destination)
    e.c = _clamp((1.0 - table.decay) * e.c, 0.0, 1.0)
    return e


def cq_plus_broadcast_probability(c_best: float, epsilon: float = DEFAULT_EPSILON) -> float:
    return epsilon + (1.0 - c_best) * (1.0 - epsilon)
