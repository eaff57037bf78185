import random

import pytest

from app.sim.can import (
    CanBus,
    CanFrame,
    crc15,
    destuff,
    frame_bits,
    frame_duration,
    serialize_and_stuff,
    split_bits,
    stuff,
)
from app.sim.errors import DuplicateId
from app.sim.events import EventQueue, TieClass

BITRATE = 500_000


def _reference_stuff(bits: list[int]) -> list[int]:
    """After every appended bit, a run of five equal bits gets a complement bit"""
    out: list[int] = []
    for bit in bits:
        out.append(bit)
        if len(out) >= 5 and len(set(out[-5:])) == 1:
            out.append(1 - out[-1])
    return out


def _random_frame(rng: random.Random) -> CanFrame:
    dlc = rng.randint(0, 8)
    return CanFrame(rng.randint(0, 0x7FF), dlc, bytes(rng.getrandbits(8) for _ in range(dlc)))


def test_crc_of_a_frame_including_its_checksum_is_zero():
    rng = random.Random(5)
    for _ in range(1000):
        bits = frame_bits(_random_frame(rng))
        assert crc15(bits) == 0


def test_stuffing_matches_the_reference_and_destuffs_back():
    rng = random.Random(9)
    for _ in range(10_000):
        frame = _random_frame(rng)
        raw = frame_bits(frame)
        stuffed = stuff(raw)
        assert stuffed == _reference_stuff(raw)
        assert destuff(stuffed) == raw
        stuff_count, total = serialize_and_stuff(frame)
        assert stuff_count == len(stuffed) - len(raw)
        assert total - stuff_count == 47 + 8 * frame.dlc


def test_all_zero_frame_needs_the_most_stuffing():
    raw = frame_bits(CanFrame(0, 8, bytes(8)))
    assert len(stuff(raw)) > len(raw) + 10


def test_six_equal_bits_is_a_stuff_error():
    with pytest.raises(ValueError):
        destuff([0, 0, 0, 0, 0, 0])


def test_frame_duration_counts_every_bit_at_the_bitrate():
    frame = CanFrame(0x25, 6)
    _, total = serialize_and_stuff(frame)
    assert frame_duration(frame, BITRATE) == total * 2_000_000
    with pytest.raises(ValueError):
        frame_duration(frame, 0)


def test_split_bits_is_msb_first():
    assert split_bits(0b1011, 4) == [1, 0, 1, 1]


@pytest.mark.parametrize("can_id, dlc", [(-1, 0), (0x800, 0), (1, 9)])
def test_frame_fields_are_range_checked(can_id, dlc):
    with pytest.raises(ValueError):
        CanFrame(can_id, dlc)


def _replay(submissions: list[tuple[int, str, CanFrame]]) -> list[tuple[int, str, int]]:
    """Whenever the bus is free the lowest pending id is sent"""
    pending = sorted(submissions, key=lambda s: s[0])
    waiting: list[tuple[str, CanFrame]] = []
    t = 0
    done = []
    while pending or waiting:
        while pending and pending[0][0] <= t:
            _, node, frame = pending.pop(0)
            waiting.append((node, frame))
        if not waiting:
            t = pending[0][0]
            continue
        node, frame = min(waiting, key=lambda item: item[1].can_id)
        waiting.remove((node, frame))
        t += frame_duration(frame, BITRATE)
        done.append((t, node, frame.can_id))
    return done


def test_arbitration_follows_lowest_identifier_first():
    rng = random.Random(17)
    for _ in range(100):
        queue = EventQueue()
        bus = CanBus("bus", BITRATE, queue)
        ids = rng.sample(range(0x800), 12)
        submissions = []
        for index, can_id in enumerate(ids):
            node = f"n{index % 4}"
            at = rng.randint(0, 2_000_000_000)
            frame = CanFrame(can_id, rng.randint(0, 8))
            submissions.append((at, node, frame))
            queue.at(at, "bus", ("enqueue", node, frame))
        queue.run_until(10**12, bus.handle)
        assert bus.completed == _replay(submissions)


def test_duplicate_identifiers_from_different_nodes_are_rejected():
    queue = EventQueue()
    bus = CanBus("bus", BITRATE, queue)
    bus.submit("a", CanFrame(5, 1), 0)
    bus.submit("b", CanFrame(5, 1), 0)
    with pytest.raises(DuplicateId) as info:
        bus.service(0)
    assert info.value.nodes == ["a", "b"]


def test_delivery_callback_sees_every_frame():
    queue = EventQueue()
    seen = []
    bus = CanBus("bus", BITRATE, queue, on_delivered=lambda b, node, frame, now: seen.append((node, now)))
    frame = CanFrame(0x10, 2)
    queue.at(0, "bus", ("enqueue", "ecu", frame), TieClass.ARRIVAL)
    queue.run_until(10**9, bus.handle)
    assert seen == [("ecu", frame_duration(frame, BITRATE))]
    assert bus.busy_time == frame_duration(frame, BITRATE)
