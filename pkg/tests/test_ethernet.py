import pytest

from app.sim.errors import QueueOverflow, TtBufferOverrun
from app.sim.ethernet import ClassTag, EthernetFrame, Link, Switch, SwitchPort, wire_duration
from app.sim.events import EventQueue
from app.sim.shapers import PolicingConfig, TtAction, TtSchedule

US = 10**6
MS = 10**9
RATE = 100 * 10**6


def _frame(tag: ClassTag, payload: int = 100, priority: int = 0, flow: str = "f", now: int = 0) -> EthernetFrame:
    return EthernetFrame("a", "b", tag, priority, payload, now, flow)


def _port(queue: EventQueue, **kwargs) -> SwitchPort:
    port = SwitchPort("a", "b", Link(RATE), queue, **kwargs)
    port.record_transmissions = True
    return port


def test_wire_duration_includes_preamble_and_gap():
    assert wire_duration(64, RATE) == 6_720_000
    assert wire_duration(1518, RATE) == 123_040_000
    with pytest.raises(ValueError):
        wire_duration(63, RATE)


@pytest.mark.parametrize("payload, on_wire", [(0, 64), (10, 64), (46, 64), (47, 65), (1500, 1518)])
def test_short_frames_are_padded(payload, on_wire):
    assert _frame(ClassTag.be(), payload).on_wire_len == on_wire


def test_frame_limits():
    with pytest.raises(ValueError):
        _frame(ClassTag.be(), 1501)
    with pytest.raises(ValueError):
        _frame(ClassTag.be(), priority=8)


def test_replicas_do_not_share_hop_trails():
    frame = _frame(ClassTag.be())
    clone = frame.replicate()
    clone.hop_trail.append(object())
    assert frame.hop_trail == []


def test_strict_priority_between_classes():
    queue = EventQueue()
    port = _port(queue)
    queue.at(0, port.name, ("enqueue", _frame(ClassTag.be(), priority=7)))
    queue.at(0, port.name, ("enqueue", _frame(ClassTag.avb(1, "A"), priority=3)))
    queue.at(0, port.name, ("enqueue", _frame(ClassTag.rc(1), priority=6)))
    queue.run_until(MS, port.handle)
    assert [label for _, _, label in port.transmissions] == ["RC", "AVB:A", "BE"]


def test_higher_rc_priority_goes_first():
    queue = EventQueue()
    port = _port(queue)
    low = _frame(ClassTag.rc(1), priority=2, flow="low")
    high = _frame(ClassTag.rc(2), priority=5, flow="high")
    port.enqueue(low, 0)
    port.enqueue(high, 0)
    sent = []
    port.on_transmitted = lambda p, frame, now: sent.append(frame.flow)
    queue.run_until(MS, port.handle)
    assert sent == ["high", "low"]


def test_transmission_is_not_preempted():
    queue = EventQueue()
    port = _port(queue)
    queue.at(0, port.name, ("enqueue", _frame(ClassTag.be(), 1500)))
    queue.at(1 * US, port.name, ("enqueue", _frame(ClassTag.rc(1), 100, priority=7)))
    queue.run_until(MS, port.handle)
    assert port.transmissions == [
        (0, 123_040_000, "BE"),
        (123_040_000, 123_040_000 + 11_040_000, "RC"),
    ]


def test_guard_band_holds_frames_out_of_reserved_windows():
    queue = EventQueue()
    schedule = TtSchedule(MS, [TtAction(100 * US, 1, "a->b", 10 * US)])
    port = _port(queue, schedule=schedule)
    queue.at(0, port.name, ("enqueue", _frame(ClassTag.be(), 1500)))
    queue.run_until(MS, port.handle)
    assert port.transmissions == [(110 * US, 110 * US + 123_040_000, "BE")]


def test_short_frames_still_fit_before_a_window():
    queue = EventQueue()
    schedule = TtSchedule(MS, [TtAction(100 * US, 1, "a->b", 10 * US)])
    port = _port(queue, schedule=schedule)
    queue.at(0, port.name, ("enqueue", _frame(ClassTag.be(), 46)))
    queue.run_until(MS, port.handle)
    assert port.transmissions[0][0] == 0


def test_time_triggered_frames_leave_at_their_offset_every_cycle():
    queue = EventQueue()
    schedule = TtSchedule(MS, [TtAction(100 * US, 1, "a->b", 20 * US)])
    port = _port(queue, schedule=schedule)
    port.tt_sources[1] = lambda now: _frame(ClassTag.tt(1), 100, priority=7, now=now)
    port.start_dispatch(0)
    queue.run_until(3 * MS, port.handle)
    assert [(start, label) for start, _, label in port.transmissions] == [
        (100 * US, "TT:1"),
        (MS + 100 * US, "TT:1"),
        (2 * MS + 100 * US, "TT:1"),
    ]
    assert port.tt_missed == 0


def test_empty_tt_buffer_counts_a_missed_dispatch():
    queue = EventQueue()
    port = _port(queue, schedule=TtSchedule(MS, [TtAction(0, 4, "a->b", 20 * US)]))
    port.start_dispatch(0)
    queue.run_until(2 * MS, port.handle)
    assert port.tt_missed == 3
    assert port.transmissions == []


def test_tt_buffer_holds_one_frame():
    queue = EventQueue()
    port = _port(queue, schedule=TtSchedule(MS, [TtAction(0, 1, "a->b", 20 * US)]))
    port.enqueue(_frame(ClassTag.tt(1)), 0)
    with pytest.raises(TtBufferOverrun):
        port.enqueue(_frame(ClassTag.tt(1)), 0)


def test_bounded_queue_overflows():
    queue = EventQueue()
    port = _port(queue, capacity=1)
    port.enqueue(_frame(ClassTag.be()), 0)
    with pytest.raises(QueueOverflow):
        port.enqueue(_frame(ClassTag.be()), 0)


def test_watermark_tracks_the_deepest_backlog():
    queue = EventQueue()
    port = _port(queue)
    for _ in range(3):
        port.enqueue(_frame(ClassTag.be(), 10), 0)
    queue.run_until(MS, port.handle)
    port.enqueue(_frame(ClassTag.be(), 10), MS)
    mark = port.watermarks["BE"]
    assert (mark.max_frames, mark.max_bytes) == (3, 3 * 64)


def test_avb_waits_for_credit_after_a_burst():
    queue = EventQueue()
    port = _port(queue, idle_slopes={"A": RATE // 2})
    for _ in range(2):
        port.enqueue(_frame(ClassTag.avb(1, "A"), 1500), 0)
    queue.run_until(MS, port.handle)
    (start1, end1, _), (start2, _, _) = port.transmissions
    assert start1 == 0
    # credit fell by (rate - idle) * tx and recovers at the idle slope
    assert start2 == end1 + (end1 - start1)


def _switch(ports: list[str], forwarding: dict, **kwargs):
    queue = EventQueue()
    drops = []
    switch = Switch(
        "sw",
        8 * US,
        {peer: SwitchPort("sw", peer, Link(RATE), queue) for peer in ports},
        forwarding,
        on_drop=lambda frame, reason, t: drops.append(reason),
        **kwargs,
    )
    return switch, drops


def test_switch_replicates_to_every_egress_but_the_ingress():
    switch, _ = _switch(["a", "b", "c"], {"f": ["a", "b", "c"]})
    frame = _frame(ClassTag.be())
    actions = switch.forward(frame, "a", 1000)
    assert [action.port.peer for action in actions] == ["b", "c"]
    assert all(action.at == 1000 + 8 * US for action in actions)
    assert actions[0].frame is not actions[1].frame
    assert [hop.node for hop in actions[0].frame.hop_trail] == ["sw"]


def test_switch_drops_unrouted_frames():
    switch, drops = _switch(["a", "b"], {"f": ["b"]})
    assert switch.forward(_frame(ClassTag.be(), flow="other"), "a", 0) == []
    assert drops == ["no-route"]


def test_switch_polices_rate_constrained_ingress():
    switch, drops = _switch(["a", "b"], {"f": ["b"]}, policing={"f": PolicingConfig(MS, 1518)})
    assert len(switch.forward(_frame(ClassTag.rc(1)), "a", 0)) == 1
    assert switch.forward(_frame(ClassTag.rc(1)), "a", MS // 2) == []
    assert len(switch.forward(_frame(ClassTag.rc(1)), "a", MS)) == 1
    assert drops == ["policing:rate"]
