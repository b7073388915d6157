"""Episode counters and the goodput / overhead / broadcast-rate quantities.

Every ratio returns ``None`` when its denominator is zero.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, List, Optional, Tuple

DEFAULT_ACK_SIZE = 0.1


@dataclass
class EpisodeMetrics:
    packets_entered: int = 0
    delivered_unique: int = 0
    duplicate_deliveries: int = 0
    transmissions: int = 0
    broadcasts: int = 0
    unicasts: int = 0
    acks: int = 0
    failures: int = 0
    dropped_loop: int = 0
    dropped_duplicate: int = 0
    orphaned: int = 0
    retained: int = 0
    hop_sum: int = 0
    slots: int = 0
    per_slot_transmissions: List[int] = field(default_factory=list)

    def merge(self, other: "EpisodeMetrics") -> "EpisodeMetrics":
        """Counter-wise sum; associative and commutative up to list order."""
        out = EpisodeMetrics()
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            setattr(out, f.name, a + b if not isinstance(a, list) else list(a) + list(b))
        return out

    def scaled(self, factor: int) -> "EpisodeMetrics":
        out = EpisodeMetrics()
        for f in fields(self):
            v = getattr(self, f.name)
            setattr(out, f.name, v * factor if not isinstance(v, list) else list(v))
        return out


def goodput(m: EpisodeMetrics) -> Optional[float]:
    if m.packets_entered <= 0:
        return None
    return m.delivered_unique / m.packets_entered


def normalized_overhead(m: EpisodeMetrics, n_nodes: int) -> Optional[float]:
    """Transmissions per delivered packet divided by the network size."""
    if m.delivered_unique <= 0:
        return None
    return m.transmissions / m.delivered_unique / n_nodes


def overhead_types(m: EpisodeMetrics, ack_size: float = DEFAULT_ACK_SIZE
                   ) -> Tuple[Optional[float], Optional[float]]:
    """(excess data per delivered packet, data plus weighted ACKs per delivered packet)."""
    if m.delivered_unique <= 0:
        return None, None
    nd = m.delivered_unique
    return (m.transmissions - nd) / nd, (m.transmissions + ack_size * m.acks) / nd


def broadcast_rate(m: EpisodeMetrics) -> Optional[float]:
    if m.transmissions <= 0:
        return None
    return m.broadcasts / m.transmissions


def mean_hops(m: EpisodeMetrics) -> Optional[float]:
    if m.delivered_unique <= 0:
        return None
    return m.hop_sum / m.delivered_unique


# event kinds emitted by the simulator trace
GENERATE = "generate"
TX_UNICAST = "tx_unicast"
TX_BROADCAST = "tx_broadcast"
FORCED_BROADCAST = "forced_broadcast"
RECEIVE = "receive"
ACK = "ack"
FAIL = "fail"
DELIVER = "deliver"
DUP_DELIVER = "dup_deliver"
DROP_LOOP = "drop_loop"
DROP_DUPLICATE = "drop_duplicate"
ENQUEUE = "enqueue"
FORWARDED = "forwarded"
ORPHAN = "orphan"


@dataclass(frozen=True)
class TraceEvent:
    slot: int
    node: int
    kind: str
    packet: Tuple[int, int]
    peer: Optional[int] = None
    hops: Optional[int] = None


def metrics_from_trace(events: Iterable[TraceEvent]) -> EpisodeMetrics:
    """Rebuild the counters from an event trace alone."""
    m = EpisodeMetrics()
    per_slot: Dict[int, int] = {}
    last_slot = -1
    for e in events:
        last_slot = max(last_slot, e.slot)
        if e.kind == GENERATE:
            m.packets_entered += 1
        elif e.kind in (TX_UNICAST, TX_BROADCAST):
            m.transmissions += 1
            per_slot[e.slot] = per_slot.get(e.slot, 0) + 1
            if e.kind == TX_UNICAST:
                m.unicasts += 1
            else:
                m.broadcasts += 1
        elif e.kind == ACK:
            m.acks += 1
        elif e.kind == FAIL:
            m.failures += 1
        elif e.kind == DELIVER:
            m.delivered_unique += 1
            m.hop_sum += e.hops or 0
        elif e.kind == DUP_DELIVER:
            m.duplicate_deliveries += 1
        elif e.kind == DROP_LOOP:
            m.dropped_loop += 1
        elif e.kind == DROP_DUPLICATE:
            m.dropped_duplicate += 1
        elif e.kind == ORPHAN:
            m.orphaned += 1
    m.slots = last_slot + 1
    m.per_slot_transmissions = [per_slot.get(s, 0) for s in range(m.slots)]
    return m


ROW_FIELDS = ["policy", "n_nodes", "flows", "dynamic_scale", "seed", "config_hash",
              "weights_hash", "goodput", "oh", "overhead_1", "overhead_2",
              "broadcast_rate", "mean_hops", "packets_entered", "delivered",
              "transmissions", "acks", "slots"]


def result_row(m: EpisodeMetrics, n_nodes: int, ack_size: float = DEFAULT_ACK_SIZE,
               **ids) -> dict:
    oh1, oh2 = overhead_types(m, ack_size)
    row = dict(ids)
    row.update(n_nodes=n_nodes, goodput=goodput(m), oh=normalized_overhead(m, n_nodes),
               overhead_1=oh1, overhead_2=oh2, broadcast_rate=broadcast_rate(m),
               mean_hops=mean_hops(m), packets_entered=m.packets_entered,
               delivered=m.delivered_unique, transmissions=m.transmissions, acks=m.acks,
               slots=m.slots)
    return row


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_rows(rows: Iterable[dict], delimiter: str = ",") -> str:
    """Delimiter-separated text with a header; absent values become empty cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(ROW_FIELDS)
    for row in rows:
        writer.writerow([_fmt(row.get(k)) for k in ROW_FIELDS])
    return buf.getvalue()


def as_dict(m: EpisodeMetrics) -> dict:
    return asdict(m)
