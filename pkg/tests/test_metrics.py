import pytest
from hypothesis import given, strategies as st

from deepcq import metrics as M
from deepcq.config import Flow, ScenarioConfig
from deepcq.metrics import EpisodeMetrics
from deepcq.sim import Simulation, make_policy

from scenarios import AlwaysBroadcast, chain


def counters(**kw):
    return EpisodeMetrics(**kw)


class TestFormulas:
    def test_goodput(self):
        assert M.goodput(counters(packets_entered=10, delivered_unique=7)) == 0.7
        assert M.goodput(counters(packets_entered=4, delivered_unique=4)) == 1.0
        assert M.goodput(counters()) is None

    def test_normalized_overhead(self):
        assert M.normalized_overhead(counters(transmissions=140, delivered_unique=7), 10) == 2.0
        assert M.normalized_overhead(counters(transmissions=3), 10) is None

    def test_overhead_types(self):
        assert M.overhead_types(counters(transmissions=5, delivered_unique=5), 0.0)[0] == 0.0
        assert M.overhead_types(counters(transmissions=15, delivered_unique=5))[0] == 2.0
        oh2 = M.overhead_types(counters(transmissions=10, acks=10, delivered_unique=5), 0.1)[1]
        assert oh2 == pytest.approx(2.2, abs=1e-15)
        assert M.overhead_types(counters(transmissions=3)) == (None, None)

    def test_broadcast_rate(self):
        assert M.broadcast_rate(counters(transmissions=4, unicasts=4)) == 0.0
        assert M.broadcast_rate(counters(transmissions=4, broadcasts=4)) == 1.0
        assert M.broadcast_rate(counters()) is None


TRIANGLE = ScenarioConfig(n_nodes=3, flows=(Flow(0, 2),), t_max=1, mobility="static",
                          positions=((100.0, 250.0), (250.0, 350.0), (300.0, 250.0)))


class TestScriptedTraces:
    def test_duplicate_delivery_not_counted(self):
        # slot 0: 0 floods, 2 receives (delivery) and 1 queues; slot 1: 1 floods,
        # 0 loop-drops, 2 drops a duplicate and answers
        sim = Simulation(TRIANGLE, AlwaysBroadcast(), trace=True)
        m = sim.run()
        assert (m.packets_entered, m.delivered_unique, m.duplicate_deliveries) == (1, 1, 1)
        assert (m.transmissions, m.acks) == (2, 3)
        assert M.goodput(m) == 1.0
        assert M.normalized_overhead(m, 3) == 2 / 3
        assert M.overhead_types(m, 0.1) == pytest.approx((1.0, 2.3), abs=1e-15)
        assert M.broadcast_rate(m) == 1.0
        assert M.mean_hops(m) == 1.0

    def test_two_node_direct(self):
        cfg = ScenarioConfig(n_nodes=2, flows=(Flow(0, 1),), t_max=10, mobility="static",
                             positions=((100.0, 250.0), (200.0, 250.0)))
        m = Simulation(cfg, make_policy("cq+", cfg)).run()
        assert m.transmissions == m.delivered_unique == 5
        assert M.normalized_overhead(m, 2) == 0.5
        assert M.overhead_types(m)[0] == 0.0

    @pytest.mark.parametrize("seed", range(4))
    def test_converged_chain_broadcast_rate(self, seed):
        cfg = chain(4, flows=(Flow(0, 3),), seed=seed)
        sim = Simulation(cfg, make_policy("cq+", cfg), trace=True)
        m = sim.run()
        tail = [e.kind for e in sim.events if e.slot >= 2 * m.slots // 3
                and e.kind in (M.TX_BROADCAST, M.TX_UNICAST)]
        rate = tail.count(M.TX_BROADCAST) / len(tail)
        assert abs(rate - cfg.epsilon) <= 0.05


count = st.integers(0, 1000)


@given(count, count, count, count, st.integers(1, 50))
def test_ratios_scale_invariant(entered, delivered, tx, bc, factor):
    delivered = min(delivered, entered)
    bc = min(bc, tx)
    m = counters(packets_entered=entered, delivered_unique=delivered, transmissions=tx,
                 broadcasts=bc, unicasts=tx - bc)
    s = m.scaled(factor)
    for fn in (M.goodput, M.broadcast_rate, lambda x: M.overhead_types(x)[0]):
        a, b = fn(m), fn(s)
        assert (a is None and b is None) or a == pytest.approx(b, rel=1e-12)


def test_merge_is_commutative():
    a = counters(packets_entered=3, transmissions=9, per_slot_transmissions=[1, 2])
    b = counters(packets_entered=5, acks=4)
    assert a.merge(b).packets_entered == b.merge(a).packets_entered == 8
    assert a.merge(b).acks == 4


def test_rows_are_delimited_text():
    m = counters(packets_entered=2, delivered_unique=1, transmissions=4, broadcasts=1,
                 unicasts=3, acks=5, hop_sum=3, slots=9)
    row = M.result_row(m, 4, policy="cq+", seed=3, flows=1)
    text = M.format_rows([row])
    header, line = text.splitlines()
    assert header.split(",") == M.ROW_FIELDS
    cells = dict(zip(M.ROW_FIELDS, line.split(",")))
    assert cells["goodput"] == "0.5" and cells["oh"] == "1.0" and cells["mean_hops"] == "3.0"
    assert cells["weights_hash"] == ""
