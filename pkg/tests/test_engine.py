import pytest

from conftest import LOSSLESS, make_scenario
from oracles import reference_latency
from sdwban.engine import Simulation, run
from sdwban.messages import CONTROL_BITS, Variant
from sdwban.model import TrafficClass

BODY, UPLINK, CONTROL, BACKHAUL = (0.002, 250e3), (0.005, 250e3), (0.01, 250e3), (0.05, 10e6)


def events(trace, name):
    return [r for r in trace.records if r["event"] == name]


def test_vacuous_run():
    trace, rep = run(make_scenario(sensors=[]))
    assert events(trace, "sample_emitted") == [] and events(trace, "delivered") == []
    assert rep.per_class[TrafficClass.NORMAL] is None and rep.per_class[TrafficClass.EMERGENCY] is None
    assert rep.packet_ins == 0 and rep.flow_mods == 0
    assert trace.records[-1]["event"] == "run_end"


def test_reference_scenario_against_hand_calculation():
    trace, rep = run(make_scenario())
    n = rep.per_class[TrafficClass.NORMAL]
    assert (n.generated, n.delivered, rep.packet_ins, rep.flow_mods) == (10, 10, 1, 1)

    steady = reference_latency(1000, 1000, body=BODY, uplink=UPLINK, backhaul=BACKHAUL)
    control = lambda v: CONTROL[0] + CONTROL_BITS[v] / CONTROL[1]
    first = steady + control(Variant.PACKET_IN) + control(Variant.FLOW_MOD)
    got = [(r["fields"]["created_at"], r["fields"]["latency"]) for r in events(trace, "delivered")]
    assert [c for c, _ in got] == [float(t) for t in range(1, 11)]
    assert got[0][1] == pytest.approx(first, abs=1e-9)
    for _, lat in got[1:]:
        assert lat == pytest.approx(steady, abs=1e-9)


def test_same_seed_same_bytes_and_seed_matters():
    sensors = [{"patient": 0, "app": "heart_rate"}, {"patient": 0, "app": "ecg"}]
    a = run(make_scenario(seed=42, sensors=sensors))[0].dumps()
    b = run(make_scenario(seed=42, sensors=sensors))[0].dumps()
    c = run(make_scenario(seed=43, sensors=sensors))[0].dumps()
    assert a == b and a != c


def test_trace_is_time_ordered_with_dense_seq():
    trace, _ = run(make_scenario(topology={"n_patients": 3, "j_controllers": 1},
                                 sensors=[{"patient": i, "app": "heart_rate"} for i in range(3)]))
    ts = [r["t"] for r in trace.records]
    assert ts == sorted(ts)
    assert [r["seq"] for r in trace.records] == list(range(len(ts)))


def test_dead_sensor_sends_are_suppressed_and_counted():
    sc = make_scenario(sensors=[{"patient": 0, "app": "heart_rate", "period_s": 1.0, "phase_s": 1.0,
                                 "battery_j": 0.0035, "tx_cost_j": 0.001, "sample_cost_j": 0.0005}])
    trace, rep = run(sc)
    assert len(events(trace, "node_dead")) == 1
    assert len(events(trace, "low_battery")) == 1
    n = rep.per_class[TrafficClass.NORMAL]
    assert n.generated == 10
    assert rep.drops["dead_battery"] == len(events(trace, "send_suppressed")) > 0
    assert n.delivered + rep.drops["dead_battery"] == 10


def test_sensor_low_battery_reaches_the_controller():
    sc = make_scenario(sensors=[{"patient": 0, "app": "heart_rate", "period_s": 1.0, "phase_s": 1.0,
                                 "battery_j": 0.01, "tx_cost_j": 0.001, "sample_cost_j": 0.0}])
    trace, _ = run(sc)
    sent = events(trace, "low_battery_sent")
    assert sent and sent[0]["fields"]["node"] == "s0"
    assert any(r["fields"]["node"] == "s0" for r in events(trace, "node_excluded"))


def test_all_controllers_down_orphan_still_forwards_emergencies():
    sc = make_scenario(
        duration_s=40,
        sensors=[
            {"patient": 0, "app": "heart_rate", "period_s": 1.0, "phase_s": 0.5, "jitter_stddev": 0,
             "episodes": [{"start_s": 20, "end_s": 30, "value": 160}]},
            {"patient": 0, "app": "glucose", "period_s": 2.0, "phase_s": 15.0, "jitter_stddev": 0},
        ],
        fault_plan=[{"t": 5, "action": "crash", "node": "lc0"}, {"t": 5, "action": "crash", "node": "cc0"}],
    )
    trace, rep = run(sc)
    changes = events(trace, "association_changed")
    assert changes[-1]["fields"]["state"] == "orphan"
    e = rep.per_class[TrafficClass.EMERGENCY]
    assert e.generated == 10 and e.delivered == 10
    # glucose never got a rule: buffered, never asked for, never delivered
    assert not any(r["fields"]["app"] == "glucose" for r in events(trace, "delivered"))
    assert rep.residual_in_flight > 0


def test_switch_crash_drops_and_recovers():
    sc = make_scenario(
        duration_s=30,
        sensors=[{"patient": 0, "app": "heart_rate", "period_s": 0.1, "phase_s": 0.05, "jitter_stddev": 0}],
        link_defaults={**LOSSLESS, "uplink": {"loss_prob": 0, "bandwidth_bps": 9000}},
        fault_plan=[{"t": 10, "action": "crash", "node": "sw0"}, {"t": 12, "action": "recover", "node": "sw0"}],
    )
    trace, rep = run(sc)
    assert rep.drops.get("node_crash", 0) > 0
    assert rep.drops.get("endpoint_down", 0) > 0
    assert [r["fields"]["to"] for r in events(trace, "association_changed")] == ["lc0", "lc0"]
    late = [r for r in events(trace, "delivered") if r["fields"]["created_at"] > 13]
    assert late


def test_leaving_coverage_loses_out_of_range_then_resumes():
    sc = make_scenario(
        duration_s=80,
        topology={
            "n_patients": 1, "j_controllers": 1, "relays": 1,
            "positions": {"sw1": [0, 0], "gw0": [0, 200]},
            "links": [{"a": "sw1", "b": "gw0"}],
        },
        mobility={"sw0": {"waypoints": [[10, 0], [100, 0], [10, 0]], "speed_mps": 3.0}},
        sensors=[{"patient": 0, "app": "heart_rate", "period_s": 0.5, "phase_s": 0.1, "jitter_stddev": 0}],
    )
    trace, rep = run(sc)
    assert rep.drops.get("out_of_range", 0) > 0
    lost_t = [r["t"] for r in events(trace, "drop") if r["fields"]["reason"] == "out_of_range"]
    delivered_after = [r for r in events(trace, "delivered") if r["fields"]["created_at"] > max(lost_t)]
    assert delivered_after
    assert rep.handovers == 0


def test_packet_in_timeout_when_controller_never_answers():
    # a long liveness window keeps the switch attached to the dead LC
    sc = make_scenario(duration_s=30, timers={"missed_heartbeats": 100},
                       fault_plan=[{"t": 0.5, "action": "crash", "node": "lc0"}])
    trace, rep = run(sc)
    sends = [r["t"] for r in events(trace, "packet_in_sent")]
    # first request at 1.006 s, then 5 retries 2 s apart
    assert sends[:6] == pytest.approx([1.006 + 2 * k for k in range(6)])
    timeouts = [r for r in events(trace, "drop") if r["fields"]["reason"] == "packet_in_timeout"]
    assert timeouts and timeouts[0]["t"] == pytest.approx(13.006)
    assert rep.per_class[TrafficClass.NORMAL].delivered == 0


def test_observer_sees_every_event():
    seen = []
    sim = Simulation(make_scenario(), observer=lambda s, ev: seen.append((ev.at, ev.seq)))
    sim.run()
    assert seen == sorted(seen) and len(seen) > 10
