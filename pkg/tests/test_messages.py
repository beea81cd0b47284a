import json
import math

from hypothesis import given
from hypothesis import strategies as st

from sdwban.flows import EMERGENCY_PRIORITY, NORMAL_PRIORITY, Drop, FlowEntry, ForwardTo
from sdwban.messages import (
    CONTROL_BITS,
    Associate,
    AssociateAck,
    ControlMessage,
    ControllerHeartbeat,
    EmergencyBroadcast,
    FlowMod,
    HandoverNotice,
    Hello,
    LowBattery,
    PacketIn,
    Variant,
)
from sdwban.model import (
    AppKind,
    FlowKey,
    Packet,
    PhysiologicalReading,
    TrafficClass,
    central_controller,
    gateway,
    local_controller,
    sensor,
    switch,
)

nodes = st.builds(switch, st.integers(0, 20))
finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6)
times = st.floats(0, 1e6)


@st.composite
def entries(draw):
    sw = draw(nodes)
    if draw(st.booleans()):
        key = FlowKey(sw, None, TrafficClass.EMERGENCY)
        prio, timeout = EMERGENCY_PRIORITY, math.inf
    else:
        key = FlowKey(sw, draw(st.sampled_from(list(AppKind))), TrafficClass.NORMAL)
        prio, timeout = NORMAL_PRIORITY, draw(st.floats(0.1, 100))
    action = draw(st.one_of(
        st.just(Drop()),
        st.builds(lambda r: ForwardTo(switch(r), (sw, switch(r), gateway())), st.integers(21, 30)),
    ))
    t = draw(times)
    return FlowEntry(key, action, prio, timeout, t, t, draw(st.integers(0, 100)))


@st.composite
def packets(draw):
    app = draw(st.sampled_from(list(AppKind)))
    t = draw(times)
    return Packet(draw(st.integers(0, 10**6)), sensor(draw(st.integers(0, 9))), draw(nodes), app,
                  draw(st.sampled_from(list(TrafficClass))), PhysiologicalReading(app, draw(finite), t), t,
                  draw(st.integers(1, 10**5)), [sensor(0)])


payloads = st.one_of(
    st.just(Hello()),
    st.builds(Associate, st.one_of(st.none(), st.integers(0, 50))),
    st.builds(AssociateAck, st.one_of(st.none(), entries())),
    st.builds(PacketIn, packets()),
    st.builds(FlowMod, entries()),
    st.builds(EmergencyBroadcast, entries()),
    st.builds(LowBattery, nodes, st.floats(0, 1000), st.booleans()),
    st.builds(HandoverNotice, nodes, st.one_of(st.none(), nodes), nodes, st.tuples(finite, finite), st.booleans()),
    st.builds(ControllerHeartbeat, st.one_of(st.none(), st.just({"registry": {}, "flows": {}}))),
)


@given(payloads, times)
def test_encode_decode_round_trip(payload, t):
    msg = ControlMessage(local_controller(0), switch(3), payload, t)
    wire = json.loads(json.dumps(msg.encode()))
    back = ControlMessage.decode(wire)
    if isinstance(payload, PacketIn):
        # the on-air header does not carry the switch-local route stamp
        assert back.payload.packet.header() == payload.packet.header()
        assert back.variant is msg.variant
    else:
        assert back == msg


def test_every_variant_has_a_size():
    assert set(CONTROL_BITS) == set(Variant)
    assert all(b > 0 for b in CONTROL_BITS.values())


def test_variant_follows_payload_type():
    m = ControlMessage(switch(0), central_controller(), Associate(0), 0.0)
    assert m.variant is Variant.ASSOCIATE and m.size_bits == CONTROL_BITS[Variant.ASSOCIATE]
