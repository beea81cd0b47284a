import math

from sdwban import controller as ctl
from sdwban.flows import Drop, ForwardTo
from sdwban.messages import (
    Associate,
    AssociateAck,
    ControlMessage,
    EmergencyBroadcast,
    FlowMod,
    HandoverNotice,
    LowBattery,
    PacketIn,
)
from sdwban.model import (
    AppKind,
    Packet,
    PhysiologicalReading,
    TrafficClass,
    central_controller,
    gateway,
    local_controller,
    sensor,
    switch,
)
from sdwban.routing import TopologyView, compute_route

GW, LC0, LC1, CC = gateway(), local_controller(0), local_controller(1), central_controller()
N, E = TrafficClass.NORMAL, TrafficClass.EMERGENCY


def state(links, role=ctl.Role.LOCAL, cid=LC0, peers=()):
    return ctl.ControllerState(cid, role, GW, TopologyView(links), set(peers))


def register(cs, *switches, now=0.0):
    for s in switches:
        ctl.handle_associate(cs, ControlMessage(s, cs.id, Associate(s.index), now), now)


def packet_in(cs, s, app=AppKind.HEART_RATE, cls=N, now=1.0):
    p = Packet(0, sensor(0), s, app, cls, PhysiologicalReading(app, 1.0, now), now, 1000, [sensor(0)])
    return ctl.handle_packet_in(cs, ControlMessage(s, cs.id, PacketIn(p), now), now)


def flow_mods(msgs):
    return [m for m in msgs if isinstance(m.payload, FlowMod)]


def test_normal_packet_in_on_direct_link():
    s1 = switch(1)
    cs = state([(s1, GW, 0.01)])
    register(cs, s1)
    msgs, _ = packet_in(cs, s1)
    (fm,) = flow_mods(msgs)
    assert fm.receiver == s1
    assert fm.payload.entry.action == ForwardTo(GW, (s1, GW))
    assert fm.payload.entry.key.traffic_class is N


def test_emergency_packet_in_broadcasts_to_every_registered_switch():
    sws = [switch(i) for i in (1, 2, 3)]
    cs = state([(s, GW, 0.01) for s in sws])
    register(cs, *sws)
    msgs, notes = packet_in(cs, sws[0], cls=E)
    assert len(flow_mods(msgs)) == 1
    bc = [m for m in msgs if isinstance(m.payload, EmergencyBroadcast)]
    assert sorted(m.receiver for m in bc) == sws
    assert all(m.payload.entry.key.is_wildcard for m in bc)
    assert any(n.event == "emergency_broadcast_issued" for n in notes)


def test_excluded_only_relay_gives_drop_and_unreachable_note():
    s1, r = switch(0), switch(1)
    cs = state([(s1, r, 0.01), (r, GW, 0.01)])
    register(cs, s1)
    ctl.handle_low_battery(cs, ControlMessage(r, LC0, LowBattery(r, 1.0), 0.5), 0.5)
    msgs, notes = packet_in(cs, s1)
    (fm,) = flow_mods(msgs)
    assert isinstance(fm.payload.entry.action, Drop)
    assert [n.event for n in notes] == ["routed_unreachable"]


def test_associate_ack_carries_emergency_wildcard():
    s1 = switch(1)
    cs = state([(s1, GW, 0.01)])
    (ack,), _ = ctl.handle_associate(cs, ControlMessage(s1, LC0, Associate(1), 0.0), 0.0)
    assert isinstance(ack.payload, AssociateAck)
    e = ack.payload.emergency_entry
    assert e.key.is_wildcard and e.priority > 10 and math.isinf(e.idle_timeout_s)


def diamond():
    s1, r1, r2 = switch(0), switch(1), switch(2)
    return s1, r1, r2, [(s1, r1, 0.002), (s1, r2, 0.004), (r1, GW, 0.005), (r2, GW, 0.005)]


def test_low_battery_relay_reroutes_flows():
    s1, r1, r2, links = diamond()
    cs = state(links)
    register(cs, s1)
    packet_in(cs, s1)
    msgs, _ = ctl.handle_low_battery(cs, ControlMessage(r1, LC0, LowBattery(r1, 1.0), 5.0), 5.0)
    fms = flow_mods(msgs)
    # the normal flow and the pre-installed emergency wildcard both moved
    assert len(fms) == 2
    assert all(m.payload.entry.action.route == (s1, r2, GW) for m in fms)
    assert r1 in cs.excluded


def test_low_battery_off_path_changes_nothing():
    s1, r1, r2, links = diamond()
    cs = state(links)
    register(cs, s1)
    packet_in(cs, s1)
    msgs, _ = ctl.handle_low_battery(cs, ControlMessage(r2, LC0, LowBattery(r2, 1.0), 5.0), 5.0)
    assert flow_mods(msgs) == []
    assert cs.excluded == {r2}


def test_two_flows_on_dying_relay_match_oracle_recomputation():
    s1, s3, r1, r2 = switch(0), switch(3), switch(1), switch(2)
    links = [(s1, r1, 0.002), (s1, r2, 0.004), (s3, r1, 0.002), (s3, r2, 0.003),
             (r1, GW, 0.005), (r2, GW, 0.005)]
    cs = state(links)
    register(cs, s1, s3)
    packet_in(cs, s1)
    packet_in(cs, s3)
    msgs, _ = ctl.handle_low_battery(cs, ControlMessage(r1, LC0, LowBattery(r1, 1.0), 5.0), 5.0)
    view = TopologyView(links)
    for s in (s1, s3):
        expected = tuple(compute_route(view, s, GW, {r1}))
        for (sw_, key), e in cs.installed.items():
            if sw_ == s:
                assert e.action.route == expected
    assert {m.receiver for m in flow_mods(msgs)} == {s1, s3}


def test_low_battery_from_gateway_is_ignored():
    s1 = switch(1)
    cs = state([(s1, GW, 0.01)])
    msgs, notes = ctl.handle_low_battery(cs, ControlMessage(GW, LC0, LowBattery(GW, 1.0), 0.0), 0.0)
    assert msgs == [] and GW not in cs.excluded


def test_handover_reroutes_via_new_attachment():
    s3, r1, r2 = switch(0), switch(1), switch(2)
    cs = state([(s3, r1, 0.005), (r1, GW, 0.005), (r2, GW, 0.005)])
    register(cs, s3)
    packet_in(cs, s3)
    notice = HandoverNotice(s3, r1, r2, (50.0, 0.0))
    msgs, notes = ctl.handle_handover(cs, ControlMessage(s3, LC0, notice, 10.0), 10.0)
    fms = flow_mods(msgs)
    assert fms and all(m.payload.entry.action.route == (s3, r2, GW) for m in fms)
    assert not cs.view.has_link(s3, r1) and cs.view.has_link(s3, r2)
    assert cs.registry[s3].position == (50.0, 0.0)


def test_handover_with_unchanged_best_path_is_silent():
    s3, r1, r2 = switch(0), switch(1), switch(2)
    cs = state([(s3, r1, 0.005), (s3, r2, 0.005), (r1, GW, 0.005), (r2, GW, 0.005)])
    register(cs, s3)
    packet_in(cs, s3)
    # attachment to r2 goes away; r1 stays the best path
    notice = HandoverNotice(s3, r2, r1, (0.0, 0.0))
    msgs, _ = ctl.handle_handover(cs, ControlMessage(s3, LC0, notice, 10.0), 10.0)
    assert flow_mods(msgs) == []


def test_handover_from_unknown_switch_is_discarded():
    cs = state([(switch(1), GW, 0.01)])
    notice = HandoverNotice(switch(9), None, switch(1), (0.0, 0.0))
    msgs, notes = ctl.handle_handover(cs, ControlMessage(switch(9), LC0, notice, 1.0), 1.0)
    assert msgs == [] and cs.discarded == 1


def _heartbeat_from(src, dst, now):
    (peer_beat,) = [m for m in ctl.heartbeat_messages(src, now) if m.receiver == dst.id]
    ctl.handle_peer_heartbeat(dst, peer_beat, now)


def test_surviving_lc_adopts_switches_of_failed_peer():
    s1, s2 = switch(0), switch(1)
    links = [(s1, GW, 0.01), (s2, GW, 0.01)]
    lc0 = state(links, cid=LC0, peers={LC1, CC})
    lc1 = state(links, cid=LC1, peers={LC0, CC})
    register(lc0, s1, s2)
    packet_in(lc0, s1)
    _heartbeat_from(lc0, lc1, 1.0)
    _, notes = ctl.check_peers(lc1, 4.0)
    assert any(n.event == "takeover" for n in notes)
    register(lc1, s1, s2, now=4.1)
    assert {s1, s2} <= set(lc1.registry)
    assert (s1, next(k for (s, k) in lc0.installed if s == s1 and k.traffic_class is N)) in lc1.installed


def test_central_adopts_when_all_lcs_fail():
    s1 = switch(0)
    lc0 = state([(s1, GW, 0.01)], cid=LC0, peers={CC})
    cc = state([(s1, GW, 0.01)], role=ctl.Role.CENTRAL, cid=CC, peers={LC0})
    register(lc0, s1)
    _heartbeat_from(lc0, cc, 1.0)
    _, notes = ctl.check_peers(cc, 4.0)
    assert [n.event for n in notes] == ["takeover"]
    register(cc, s1, now=4.1)
    assert s1 in cc.registry


def test_restarted_lc_is_fresh_and_nothing_flaps_back():
    s1 = switch(0)
    cc = state([(s1, GW, 0.01)], role=ctl.Role.CENTRAL, cid=CC, peers={LC0})
    register(cc, s1, now=5.0)
    fresh = state([(s1, GW, 0.01)], cid=LC0, peers={CC})
    (hello,) = ctl.hello_messages(fresh, 20.0)
    ctl.handle_hello(cc, hello, 20.0)
    assert fresh.registry == {}
    _heartbeat_from(fresh, cc, 21.0)
    assert s1 in cc.registry
