"""
CAN <-> Ethernet gateways: routing, holdup pools and frame encapsulation.

Encapsulation layout (all multi-byte fields big-endian):

    count (1 B) | id (4 B) dlc (1 B) data (dlc B) | ... repeated count times

Only the low 11 bits of id are significant. Padding after the last declared
entry is ignored on decapsulation.
"""
import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from app.sim.can import MAX_DLC, CanFrame
from app.sim.errors import MalformedPayload, NotAMember
from app.sim.ethernet import ClassTag, EthernetFrame, Hop, SwitchPort
from app.sim.events import EventQueue, TieClass
from app.sim.shapers import BagState, bag_gate, bag_release

logger = logging.getLogger(__name__)

ETHERNET = "ethernet"
ENTRY_HEADER = struct.Struct(">IB")
MAX_POOLED_FRAMES = 255


@dataclass(frozen=True)
class RouteEntry:
    """Where a routed message goes and how it is represented there"""

    destination: str  # bus name or ETHERNET
    flow: str
    can_id: Optional[int] = None
    dlc: Optional[int] = None
    class_tag: Optional[ClassTag] = None
    priority: int = 0
    egress: tuple[str, ...] = ()
    payload_len: int = 0
    pool: Optional[str] = None
    bag: Optional[int] = None  # rate-constrained emissions only


@dataclass
class RoutingTable:
    entries: dict[tuple[str, object], list[RouteEntry]] = field(default_factory=dict)

    def add(self, key: tuple[str, object], entry: RouteEntry) -> None:
        self.entries.setdefault(key, []).append(entry)


def route(table: RoutingTable, key: tuple[str, object], frame=None) -> list[RouteEntry]:
    """Destinations of a message in configuration order; empty means drop"""
    return list(table.entries.get(key, ()))


@dataclass
class Pool:
    pool_id: str
    members: frozenset[str]
    pending: list[tuple[CanFrame, int]] = field(default_factory=list)
    deadline: Optional[int] = None


def pool_admit(pool: Pool, frame: CanFrame, now: int, frame_holdup: int) -> Pool:
    if frame.flow not in pool.members:
        raise NotAMember(f"message '{frame.flow}' is not a member of pool {pool.pool_id}")
    expiry = now + frame_holdup
    if not pool.pending:
        pool.deadline = expiry
    else:
        pool.deadline = min(pool.deadline, expiry)
    pool.pending.append((frame, now))
    return pool


def pool_flush(pool: Pool, now: int) -> bytes:
    """Release every pending frame together as one encapsulated payload"""
    if not pool.pending:
        raise ValueError(f"pool {pool.pool_id} has nothing to flush")
    payload = encapsulate([frame for frame, _ in pool.pending])
    pool.pending = []
    pool.deadline = None
    return payload


def encapsulate(frames: list[CanFrame]) -> bytes:
    if not 1 <= len(frames) <= MAX_POOLED_FRAMES:
        raise ValueError(f"can encapsulate 1..{MAX_POOLED_FRAMES} frames, got {len(frames)}")
    chunks = [bytes([len(frames)])]
    for frame in frames:
        chunks.append(ENTRY_HEADER.pack(frame.can_id & 0x7FF, frame.dlc))
        chunks.append(bytes(frame.data))
    return b"".join(chunks)


def decapsulate(payload: bytes) -> list[CanFrame]:
    if not payload:
        raise MalformedPayload("empty payload")
    count = payload[0]
    frames = []
    cursor = 1
    for index in range(count):
        if cursor + ENTRY_HEADER.size > len(payload):
            raise MalformedPayload(f"entry {index} header truncated at byte {cursor}")
        raw_id, dlc = ENTRY_HEADER.unpack_from(payload, cursor)
        cursor += ENTRY_HEADER.size
        if dlc > MAX_DLC:
            raise MalformedPayload(f"entry {index} declares dlc {dlc}")
        if cursor + dlc > len(payload):
            raise MalformedPayload(f"entry {index} data truncated at byte {cursor}")
        frames.append(CanFrame(raw_id & 0x7FF, dlc, payload[cursor:cursor + dlc]))
        cursor += dlc
    return frames


def encapsulated_size(dlcs: list[int]) -> int:
    return 1 + sum(ENTRY_HEADER.size + dlc for dlc in dlcs)


def unpack(frame: EthernetFrame) -> list[CanFrame]:
    """
    Restore the CAN frames carried by an encapsulating Ethernet frame.

    The payload bytes are authoritative for id, dlc and data. Each inner
    frame's trail is continued with the Ethernet hops so that latency is
    accounted from the original CAN sender.
    """
    decoded = decapsulate(frame.payload)
    if len(decoded) != len(frame.inner):
        raise MalformedPayload(f"payload carries {len(decoded)} entries, frame metadata {len(frame.inner)}")
    for entry, inner in zip(decoded, frame.inner):
        inner.can_id, inner.dlc, inner.data = entry.can_id, entry.dlc, entry.data
        inner.hop_trail[-1].departure = frame.hop_trail[0].departure
        inner.hop_trail.extend(frame.hop_trail[1:])
    return frame.inner


@dataclass
class Release:
    flow: str
    arrival: int
    released: int
    holdup: int


class Gateway:
    """Translates frames between attached CAN busses and Ethernet ports"""

    def __init__(
        self,
        name: str,
        queue: EventQueue,
        routing: RoutingTable,
        ports: dict[str, SwitchPort],
        pools: Optional[dict[str, Pool]] = None,
        holdups: Optional[dict[str, int]] = None,
        processing_delay: int = 0,
        on_drop: Optional[Callable[[object, str, int], None]] = None,
    ):
        self.name = name
        self.queue = queue
        self.routing = routing
        self.ports = ports
        self.pools = pools or {}
        self.holdups = holdups or {}
        self.processing_delay = processing_delay
        self.on_drop = on_drop
        self.releases: list[Release] = []
        self.bags: dict[str, BagState] = {}
        self._flush_events: dict[str, object] = {}
        self._frame_ids = 0

    # -- ingress ----------------------------------------------------------

    def receive_can(self, bus: str, frame: CanFrame, now: int) -> None:
        frame.hop_trail.append(Hop(self.name, now))
        self._dispatch((bus, frame.can_id), frame, now)

    def receive_ethernet(self, frame: EthernetFrame, now: int) -> None:
        frame.hop_trail.append(Hop(self.name, now))
        if not frame.inner:
            self._dispatch((ETHERNET, frame.flow), frame, now)
            return
        for inner in unpack(frame):
            self._dispatch((ETHERNET, inner.flow), inner, now)

    def _dispatch(self, key: tuple[str, object], frame, now: int) -> None:
        entries = route(self.routing, key, frame)
        if not entries:
            logger.debug(f"{self.name}: no route for {key}")
            if self.on_drop is not None:
                self.on_drop(frame, "no-route", now)
            return
        for index, entry in enumerate(entries):
            copy_ = frame if index == len(entries) - 1 else frame.replicate()
            if entry.destination == ETHERNET:
                self._to_ethernet(entry, copy_, now)
            else:
                self._to_bus(entry, copy_, now)

    # -- egress -----------------------------------------------------------

    def _to_bus(self, entry: RouteEntry, frame, now: int) -> None:
        if isinstance(frame, EthernetFrame):
            dlc = entry.dlc if entry.dlc is not None else min(frame.payload_len, MAX_DLC)
            data = frame.payload[:dlc].ljust(dlc, b"\x00")
            frame = CanFrame(entry.can_id, dlc, data, frame.created_at, frame.flow,
                             frame.hop_trail)
        else:
            frame.can_id = entry.can_id
        self.queue.at(now + self.processing_delay, entry.destination, ("enqueue", self.name, frame),
                      TieClass.ARRIVAL)

    def _to_ethernet(self, entry: RouteEntry, frame, now: int) -> None:
        if isinstance(frame, EthernetFrame):
            raise ValueError(f"{self.name} does not bridge Ethernet to Ethernet ({frame.flow})")
        if entry.pool is None:
            self._send(entry, [frame], now)
            return
        pool = self.pools[entry.pool]
        before = pool.deadline
        pool_admit(pool, frame, now, self.holdups[frame.flow])
        if pool.deadline != before:
            handle = self._flush_events.get(pool.pool_id)
            if handle is not None:
                self.queue.cancel(handle)
            self._flush_events[pool.pool_id] = self.queue.at(
                pool.deadline, self.name, ("flush", pool.pool_id, entry), TieClass.QUEUE_SERVICE)

    def flush(self, pool_id: str, entry: RouteEntry, now: int) -> None:
        pool = self.pools[pool_id]
        self._flush_events.pop(pool_id, None)
        for frame, arrival in pool.pending:
            self.releases.append(Release(frame.flow, arrival, now, self.holdups[frame.flow]))
        frames = [frame for frame, _ in pool.pending]
        payload = pool_flush(pool, now)
        self._send(entry, frames, now, payload)

    def _send(self, entry: RouteEntry, frames: list[CanFrame], now: int,
              payload: Optional[bytes] = None) -> None:
        if payload is None:
            payload = encapsulate(frames)
        self._frame_ids += 1
        ready = now + self.processing_delay
        for index, peer in enumerate(entry.egress):
            carried = frames if index == len(entry.egress) - 1 else [f.replicate() for f in frames]
            eth = EthernetFrame(
                src=self.name,
                dst=peer,
                class_tag=entry.class_tag,
                priority=entry.priority,
                payload_len=len(payload),
                created_at=min(f.created_at for f in frames),
                flow=entry.flow,
                hop_trail=[Hop(self.name, ready)],
                payload=payload,
                inner=carried,
                frame_id=self._frame_ids,
            )
            port = self.ports[peer]
            at = ready
            if entry.bag is not None:
                bag = self.bags.setdefault(f"{port.name}:{entry.flow}", BagState(entry.bag))
                at = bag_gate(bag, ready)
                bag_release(bag, at)
            self.queue.at(at, port.name, ("enqueue", eth), TieClass.ARRIVAL)

    def handle(self, event) -> None:
        kind = event.payload[0]
        if kind == "flush":
            _, pool_id, entry = event.payload
            self.flush(pool_id, entry, event.fire_time)
        else:
            raise ValueError(f"gateway {self.name} cannot handle '{kind}'")
