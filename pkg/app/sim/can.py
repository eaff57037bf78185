"""
Bit-accurate CAN 2.0A frame timing and bus arbitration.

Standard (11-bit) data frames only: no extended identifiers, remote frames,
error frames or retransmission.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from app.sim.errors import DuplicateId
from app.sim.ethernet import Hop
from app.sim.events import EventQueue, TieClass

logger = logging.getLogger(__name__)

CRC15_POLY = 0x4599
MAX_CAN_ID = 0x7FF
MAX_DLC = 8
# CRC delimiter, ACK slot, ACK delimiter, EOF (7), intermission (3)
FIXED_TAIL_BITS = 1 + 1 + 1 + 7 + 3


@dataclass(eq=False)
class CanFrame:
    can_id: int
    dlc: int
    data: bytes = b""
    created_at: int = 0
    flow: str = ""
    hop_trail: list[Hop] = field(default_factory=list)

    def __post_init__(self):
        if not 0 <= self.can_id <= MAX_CAN_ID:
            raise ValueError(f"CAN id {self.can_id} is not an 11-bit identifier")
        if not 0 <= self.dlc <= MAX_DLC:
            raise ValueError(f"dlc {self.dlc} outside 0..{MAX_DLC}")
        if not self.data:
            self.data = bytes(self.dlc)
        if len(self.data) != self.dlc:
            raise ValueError(f"data length {len(self.data)} does not match dlc {self.dlc}")

    def replicate(self) -> "CanFrame":
        return CanFrame(self.can_id, self.dlc, self.data, self.created_at, self.flow,
                        [Hop(h.node, h.arrival, h.departure) for h in self.hop_trail])


def split_bits(value: int, width: int) -> list[int]:
    return [(value >> shift) & 1 for shift in range(width - 1, -1, -1)]


def crc15(bits: list[int]) -> int:
    register = 0
    for bit in bits:
        feedback = ((register >> 14) & 1) ^ bit
        register = (register << 1) & 0x7FFF
        if feedback:
            register ^= CRC15_POLY
    return register


def frame_bits(frame: CanFrame) -> list[int]:
    """SOF through CRC, unstuffed"""
    bits = [0]  # SOF
    bits += split_bits(frame.can_id, 11)
    bits += [0, 0, 0]  # RTR, IDE, r0
    bits += split_bits(frame.dlc, 4)
    for byte in frame.data:
        bits += split_bits(byte, 8)
    return bits + split_bits(crc15(bits), 15)


def stuff(bits: list[int]) -> list[int]:
    """Insert a complement bit after every run of five equal bits"""
    stuffed = []
    run = 0
    previous = None
    for bit in bits:
        stuffed.append(bit)
        if bit == previous:
            run += 1
        else:
            run = 1
            previous = bit
        if run == 5:
            stuffed.append(1 - bit)
            previous = 1 - bit
            run = 1
    return stuffed


def destuff(stuffed: list[int]) -> list[int]:
    bits = []
    run = 0
    previous = None
    skip = False
    for bit in stuffed:
        if skip:
            if bit == previous:
                raise ValueError("stuff error: six equal consecutive bits")
            previous = bit
            run = 1
            skip = False
            continue
        bits.append(bit)
        if bit == previous:
            run += 1
        else:
            run = 1
            previous = bit
        if run == 5:
            skip = True
    return bits


def serialize_and_stuff(frame: CanFrame) -> tuple[int, int]:
    """(number of stuff bits, total bits on the bus including the fixed tail)"""
    raw = frame_bits(frame)
    stuffed = stuff(raw)
    return len(stuffed) - len(raw), len(stuffed) + FIXED_TAIL_BITS


def frame_duration(frame: CanFrame, bitrate: int) -> int:
    if bitrate <= 0:
        raise ValueError("bitrate must be positive")
    _, total = serialize_and_stuff(frame)
    return -(-total * 10**12 // bitrate)


@dataclass
class CanBusState:
    bitrate: int
    busy_until: int = 0
    pending: dict[str, deque] = field(default_factory=dict)


def arbitrate(bus: CanBusState, t: int) -> Optional[tuple[str, CanFrame]]:
    """Lowest identifier among all pending frames wins the bus"""
    best: dict[str, CanFrame] = {}
    for node, frames in bus.pending.items():
        if frames:
            best[node] = min(frames, key=lambda frame: frame.can_id)
    if not best:
        return None
    winning_id = min(frame.can_id for frame in best.values())
    contenders = sorted(node for node, frame in best.items() if frame.can_id == winning_id)
    if len(contenders) > 1:
        raise DuplicateId(winning_id, contenders, t)
    node = contenders[0]
    return node, best[node]


class CanBus:
    """Shared CAN segment driven by the event queue"""

    def __init__(self, name: str, bitrate: int, queue: EventQueue,
                 on_delivered: Optional[Callable[["CanBus", str, CanFrame, int], None]] = None):
        self.name = name
        self.state = CanBusState(bitrate)
        self.queue = queue
        self.on_delivered = on_delivered
        self.transmitting: Optional[tuple[str, CanFrame]] = None
        self.completed: list[tuple[int, str, int]] = []
        self.busy_time = 0
        self._service_event = None

    def attach(self, node: str) -> None:
        self.state.pending.setdefault(node, deque())

    def submit(self, node: str, frame: CanFrame, now: int) -> None:
        self.state.pending.setdefault(node, deque()).append(frame)
        if self.transmitting is None and self._service_event is None:
            self._service_event = self.queue.at(now, self.name, ("service",), TieClass.QUEUE_SERVICE)

    def service(self, now: int) -> None:
        self._service_event = None
        if self.transmitting is not None:
            return
        winner = arbitrate(self.state, now)
        if winner is None:
            return
        node, frame = winner
        self.state.pending[node].remove(frame)
        if frame.hop_trail and frame.hop_trail[-1].node == node:
            frame.hop_trail[-1].departure = now
        duration = frame_duration(frame, self.state.bitrate)
        self.state.busy_until = now + duration
        self.busy_time += duration
        self.transmitting = winner
        self.queue.at(self.state.busy_until, self.name, ("tx_end",), TieClass.ARRIVAL)

    def tx_end(self, now: int) -> None:
        node, frame = self.transmitting
        self.transmitting = None
        self.completed.append((now, node, frame.can_id))
        if self.on_delivered is not None:
            self.on_delivered(self, node, frame, now)
        self.service(now)

    def handle(self, event) -> None:
        kind = event.payload[0]
        if kind == "service":
            self.service(event.fire_time)
        elif kind == "tx_end":
            self.tx_end(event.fire_time)
        elif kind == "enqueue":
            _, node, frame = event.payload
            self.submit(node, frame, event.fire_time)
        else:
            raise ValueError(f"bus {self.name} cannot handle '{kind}'")
