import random

import pytest

from app.sim.can import CanFrame
from app.sim.errors import MalformedPayload, NotAMember
from app.sim.ethernet import ClassTag, EthernetFrame, Hop, Link, SwitchPort
from app.sim.events import EventQueue
from app.sim.gateway import (
    ETHERNET,
    Gateway,
    Pool,
    RouteEntry,
    RoutingTable,
    decapsulate,
    encapsulate,
    encapsulated_size,
    pool_admit,
    pool_flush,
    route,
    unpack,
)

MS = 10**9


def _can(flow: str = "m1", can_id: int = 0x25, dlc: int = 6, created: int = 0) -> CanFrame:
    return CanFrame(can_id, dlc, bytes(range(dlc)), created, flow, [Hop("ecu", created, created)])


def test_pool_deadline_is_the_first_admission_plus_holdup():
    pool = Pool("p", frozenset({"m1"}))
    pool_admit(pool, _can(), 0, 10 * MS)
    assert pool.deadline == 10 * MS


def test_shorter_holdup_of_a_later_frame_pulls_the_deadline_in():
    pool = Pool("p", frozenset({"a", "b"}))
    pool_admit(pool, _can("a"), 0, 10 * MS)
    pool_admit(pool, _can("b"), 2 * MS, 5 * MS)
    assert pool.deadline == 7 * MS
    pool_admit(pool, _can("a"), 3 * MS, 10 * MS)
    assert pool.deadline == 7 * MS


def test_only_members_enter_a_pool():
    with pytest.raises(NotAMember):
        pool_admit(Pool("p", frozenset({"a"})), _can("z"), 0, MS)


def test_flush_empties_the_pool():
    pool = Pool("p", frozenset({"m1"}))
    pool_admit(pool, _can(dlc=2), 0, MS)
    pool_admit(pool, _can(dlc=3), 1, MS)
    payload = pool_flush(pool, MS)
    assert len(payload) == encapsulated_size([2, 3]) == 1 + 7 + 8
    assert pool.pending == [] and pool.deadline is None
    with pytest.raises(ValueError):
        pool_flush(pool, MS)


def test_encapsulation_is_lossless():
    rng = random.Random(13)
    for _ in range(10_000):
        frames = []
        for _ in range(rng.randint(1, 20)):
            dlc = rng.randint(0, 8)
            frames.append(CanFrame(rng.randint(0, 0x7FF), dlc, bytes(rng.getrandbits(8) for _ in range(dlc))))
        decoded = decapsulate(encapsulate(frames))
        assert [(f.can_id, f.dlc, f.data) for f in decoded] == [(f.can_id, f.dlc, f.data) for f in frames]


def test_padding_after_the_last_entry_is_ignored():
    payload = encapsulate([CanFrame(1, 1, b"\x07")])
    assert len(decapsulate(payload.ljust(46, b"\x00"))) == 1


@pytest.mark.parametrize("payload", [
    b"",
    bytes([2]) + bytes([0, 0, 0, 1, 1, 9]),
    bytes([1]) + bytes([0, 0, 0, 1, 9]) + bytes(9),
    bytes([1, 0, 0]),
])
def test_malformed_payloads_are_rejected(payload):
    with pytest.raises(MalformedPayload):
        decapsulate(payload)


def test_route_preserves_configuration_order():
    table = RoutingTable()
    first = RouteEntry("bus2", "m1", can_id=1, dlc=1)
    second = RouteEntry(ETHERNET, "m1")
    table.add(("bus1", 5), first)
    table.add(("bus1", 5), second)
    assert route(table, ("bus1", 5)) == [first, second]
    assert route(table, ("bus1", 6)) == []


def test_unpack_continues_each_inner_trail_with_the_ethernet_hops():
    inner = _can(created=0)
    inner.hop_trail.append(Hop("gw1", 100))
    frame = EthernetFrame("gw1", "gw2", ClassTag.tt(1), 7, 12, 0, "pool:gw1.p", [Hop("gw1", 150, 200)],
                          encapsulate([inner]), [inner])
    frame.hop_trail += [Hop("sw", 300, 400), Hop("gw2", 500)]
    (restored,) = unpack(frame)
    assert [h.node for h in restored.hop_trail] == ["ecu", "gw1", "sw", "gw2"]
    assert restored.hop_trail[1].departure == 200


def _gateway(holdup: int, queue: EventQueue) -> tuple[Gateway, SwitchPort]:
    port = SwitchPort("gw", "sw", Link(100 * 10**6), queue)
    port.record_transmissions = True
    entry = RouteEntry(ETHERNET, "pool:gw.p", class_tag=ClassTag.be(), egress=("sw",), payload_len=100, pool="p")
    table = RoutingTable()
    table.add(("bus", 0x25), entry)
    gateway = Gateway("gw", queue, table, {"sw": port}, {"p": Pool("p", frozenset({"m1"}))}, {"m1": holdup})
    return gateway, port


def test_pooled_frames_leave_together_at_the_deadline():
    queue = EventQueue()
    gateway, port = _gateway(10 * MS, queue)
    handlers = {"gw": gateway.handle, port.name: port.handle}

    def dispatch(event):
        if event.target == "feed":
            gateway.receive_can("bus", event.payload[1], event.fire_time)
        else:
            handlers[event.target](event)

    queue.at(0, "feed", ("feed", _can(created=0)))
    queue.at(4 * MS, "feed", ("feed", _can(created=4 * MS)))
    queue.run_until(20 * MS, dispatch)
    assert len(port.transmissions) == 1
    assert port.transmissions[0][0] == 10 * MS
    assert [(r.arrival, r.released) for r in gateway.releases] == [(0, 10 * MS), (4 * MS, 10 * MS)]


def test_holdup_bounds_every_release():
    rng = random.Random(99)
    for _ in range(50):
        queue = EventQueue()
        holdup = rng.randint(1, 10) * MS
        gateway, port = _gateway(holdup, queue)
        handlers = {"gw": gateway.handle, port.name: port.handle}

        def dispatch(event, gateway=gateway, handlers=handlers):
            if event.target == "feed":
                gateway.receive_can("bus", event.payload[1], event.fire_time)
            else:
                handlers[event.target](event)

        t = 0
        for _ in range(rng.randint(1, 30)):
            t += rng.randint(0, 3 * MS)
            queue.at(t, "feed", ("feed", _can(created=t)))
        queue.run_until(t + holdup + MS, dispatch)
        assert gateway.releases
        assert all(0 <= r.released - r.arrival <= r.holdup for r in gateway.releases)
        assert all(not pool.pending for pool in gateway.pools.values())


def test_unrouted_frames_are_reported_as_drops():
    queue = EventQueue()
    drops = []
    gateway = Gateway("gw", queue, RoutingTable(), {}, on_drop=lambda frame, reason, now: drops.append(reason))
    gateway.receive_can("bus", _can(), 0)
    assert drops == ["no-route"]


def test_rate_constrained_emissions_leave_one_bag_apart():
    queue = EventQueue()
    port = SwitchPort("gw", "sw", Link(100 * 10**6), queue)
    port.record_transmissions = True
    entry = RouteEntry(ETHERNET, "vl7", class_tag=ClassTag.rc(7), priority=6, egress=("sw",), bag=MS)
    table = RoutingTable()
    table.add(("bus", 0x25), entry)
    gateway = Gateway("gw", queue, table, {"sw": port})

    def dispatch(event):
        if event.target == "feed":
            gateway.receive_can("bus", event.payload[1], event.fire_time)
        else:
            port.handle(event)

    # a burst of five CAN frames within 40us, all mapped to one virtual link
    for k in range(5):
        queue.at(k * 10**7, "feed", ("feed", _can(created=k * 10**7)))
    queue.run_until(10 * MS, dispatch)
    assert [(start, label) for start, _, label in port.transmissions] == [
        (k * MS, "RC") for k in range(5)
    ]
    assert gateway.bags["gw->sw:vl7"].last_release == 4 * MS
