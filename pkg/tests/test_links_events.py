import pytest

from sdwban.events import EventKind, EventQueue, SchedulerError
from sdwban.links import Frame, LinkKind, LinkModel, link_stream, transmit
from sdwban.model import AppKind, Packet, PhysiologicalReading, TrafficClass, gateway, sensor, switch

A, B = switch(0), gateway()


def frame(bits=1000):
    p = Packet(0, sensor(0), A, AppKind.HEART_RATE, TrafficClass.NORMAL,
               PhysiologicalReading(AppKind.HEART_RATE, 72.0, 0.0), 0.0, bits, [sensor(0)])
    return Frame(A, B, LinkKind.UPLINK, p, 0.0)


def link(loss=0.0, latency=0.01, bw=250_000.0):
    return LinkModel(A, B, LinkKind.UPLINK, latency, bw, loss)


def test_arrival_time_formula():
    q = EventQueue()
    ev = transmit(link(), frame(), 0.0, link_stream(1, A, B), q)
    assert ev.kind is EventKind.FRAME_ARRIVAL and ev.at == pytest.approx(0.014, abs=1e-12)


def test_certain_loss():
    q, rng = EventQueue(), link_stream(1, A, B)
    assert all(transmit(link(1.0), frame(), 0.0, rng, q).kind is EventKind.FRAME_LOSS for _ in range(100))


def test_out_of_range_is_immediate_loss():
    q = EventQueue()
    f = frame()
    ev = transmit(link(), f, 2.0, link_stream(1, A, B), q, in_range=False)
    assert ev.kind is EventKind.FRAME_LOSS and ev.at == 2.0 and f.reason == "out_of_range"


def test_loss_rate_over_ten_thousand_frames():
    q, rng = EventQueue(), link_stream(2024, A, B)
    lost = sum(transmit(link(0.3), frame(), 0.0, rng, q).kind is EventKind.FRAME_LOSS for _ in range(10_000))
    assert 0.28 <= lost / 10_000 <= 0.32


def test_interconnect_must_be_lossless():
    with pytest.raises(ValueError):
        LinkModel(A, B, LinkKind.INTERCONNECT, 0.001, 1e8, 0.1)


def test_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.schedule(2.0, EventKind.TIMER_FIRE, "late")
    q.schedule(1.0, EventKind.TIMER_FIRE, "a")
    q.schedule(1.0, EventKind.TIMER_FIRE, "b")
    assert [q.pop().payload for _ in range(3)] == ["a", "b", "late"]


def test_queue_rejects_the_past():
    q = EventQueue()
    q.schedule(5.0, EventKind.TIMER_FIRE)
    q.pop()
    with pytest.raises(SchedulerError):
        q.schedule(4.0, EventKind.TIMER_FIRE)
