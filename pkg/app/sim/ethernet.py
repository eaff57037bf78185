"""
Ethernet frames, full-duplex links, egress ports and store-and-forward switches.

An egress port owns one queue per traffic class: a capacity-1 buffer per
TT critical-traffic id, FIFO queues per RC priority, one FIFO per AVB SR
class gated by a credit-based shaper, and a best-effort FIFO. End
stations, gateways and switches all transmit through SwitchPort.
"""
import copy
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from app.config import settings
from app.results.stats import BufferWatermark
from app.sim.clocks import LocalClock
from app.sim.errors import QueueOverflow, TtBufferOverrun
from app.sim.events import EventQueue, TieClass
from app.sim.shapers import (
    CbsMode,
    CbsState,
    PolicingConfig,
    TtSchedule,
    VlHistory,
    cbs_advance,
    cbs_eligible,
    cbs_time_to_eligible,
    guard_block_until,
    police_ingress,
    tt_dispatch_times,
)

logger = logging.getLogger(__name__)

HEADER_BYTES = 14
FCS_BYTES = 4
MIN_FRAME_BYTES = 64
MIN_PAYLOAD_BYTES = 46
MAX_PAYLOAD_BYTES = 1500
PREAMBLE_SFD_BYTES = 8
INTER_FRAME_GAP_BYTES = 12


class TrafficClass(str, Enum):
    TT = "TT"
    RC = "RC"
    AVB = "AVB"
    BE = "BE"


@dataclass(frozen=True)
class ClassTag:
    kind: TrafficClass
    ident: Optional[int] = None
    sr_class: Optional[str] = None

    @classmethod
    def tt(cls, ct_id: int) -> "ClassTag":
        return cls(TrafficClass.TT, ct_id)

    @classmethod
    def rc(cls, vl_id: int) -> "ClassTag":
        return cls(TrafficClass.RC, vl_id)

    @classmethod
    def avb(cls, stream_id: int, sr_class: str = "A") -> "ClassTag":
        return cls(TrafficClass.AVB, stream_id, sr_class)

    @classmethod
    def be(cls) -> "ClassTag":
        return cls(TrafficClass.BE)

    @property
    def queue_label(self) -> str:
        if self.kind is TrafficClass.TT:
            return f"TT:{self.ident}"
        if self.kind is TrafficClass.AVB:
            return f"AVB:{self.sr_class}"
        return self.kind.value


@dataclass
class Hop:
    node: str
    arrival: int
    departure: Optional[int] = None


@dataclass(eq=False)
class EthernetFrame:
    src: str
    dst: str
    class_tag: ClassTag
    priority: int
    payload_len: int
    created_at: int
    flow: str
    hop_trail: list[Hop] = field(default_factory=list)
    payload: bytes = b""
    inner: list = field(default_factory=list)
    frame_id: int = 0

    def __post_init__(self):
        if not 0 <= self.payload_len <= MAX_PAYLOAD_BYTES:
            raise ValueError(f"payload of {self.payload_len}B outside [0, {MAX_PAYLOAD_BYTES}]")
        if not 0 <= self.priority <= 7:
            raise ValueError("priority must lie in 0..7")

    @property
    def on_wire_len(self) -> int:
        return max(MIN_FRAME_BYTES, HEADER_BYTES + FCS_BYTES + self.payload_len)

    def replicate(self) -> "EthernetFrame":
        clone = copy.copy(self)
        clone.hop_trail = [Hop(h.node, h.arrival, h.departure) for h in self.hop_trail]
        clone.inner = [frame.replicate() for frame in self.inner]
        return clone


def wire_duration(on_wire_bytes: int, rate: int) -> int:
    """Line occupation of one frame in ps, preamble/SFD and inter-frame gap included"""
    if on_wire_bytes < MIN_FRAME_BYTES:
        raise ValueError(f"on-wire frame of {on_wire_bytes}B is below the {MIN_FRAME_BYTES}B minimum")
    bits = (PREAMBLE_SFD_BYTES + on_wire_bytes + INTER_FRAME_GAP_BYTES) * 8
    return -(-bits * 10**12 // rate)


@dataclass(frozen=True)
class Link:
    rate: int
    propagation_delay: int = 0

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("link rate must be positive")
        if self.propagation_delay < 0:
            raise ValueError("propagation delay cannot be negative")


@dataclass
class Selection:
    frame: Optional[EthernetFrame] = None
    queue: Optional[deque] = None
    label: Optional[str] = None
    start: Optional[int] = None
    wake_at: Optional[int] = None


class SwitchPort:
    """Egress side of one full-duplex link"""

    def __init__(
        self,
        node: str,
        peer: str,
        link: Link,
        queue: EventQueue,
        clock: Optional[LocalClock] = None,
        schedule: Optional[TtSchedule] = None,
        idle_slopes: Optional[dict[str, int]] = None,
        capacity: Optional[int] = None,
        watermark_factory: Optional[Callable[[str, str, str], BufferWatermark]] = None,
        on_transmitted: Optional[Callable[["SwitchPort", EthernetFrame, int], None]] = None,
    ):
        self.node = node
        self.peer = peer
        self.name = f"{node}->{peer}"
        self.link = link
        self.queue = queue
        self.clock = clock
        self.schedule = schedule
        self.idle_slopes = idle_slopes or {}
        self.capacity = capacity
        self.watermark_factory = watermark_factory
        self.on_transmitted = on_transmitted

        self.tt_slots: dict[int, Optional[EthernetFrame]] = {}
        self.tt_due: list[int] = []
        self.tt_sources: dict[int, Callable[[int], EthernetFrame]] = {}
        self.tt_missed = 0
        self.rc_queues: dict[int, deque] = {}
        self.avb_queues: dict[str, deque] = {}
        self.cbs: dict[str, CbsState] = {}
        self.be_queue: deque = deque()

        self.transmitting: Optional[EthernetFrame] = None
        self.transmitting_label: Optional[str] = None
        self.busy_until = 0
        self.transmissions: list[tuple[int, int, str]] = []
        self.record_transmissions = False
        self.cbs_trace: Optional[list[tuple[int, str, int]]] = None
        # (time, label, fifo, frames delta, bytes delta); fifo is the RC priority, else None
        self.queue_trace: Optional[list[tuple[int, str, Optional[int], int, int]]] = None

        self._watermarks: dict[str, BufferWatermark] = {}
        self._queued_bytes: dict[int, int] = {}
        self._service_event = None
        self._next_dispatch: dict[int, int] = {}
        self._dispatch_events: dict[int, object] = {}

    # -- queues -----------------------------------------------------------

    def _watermark(self, label: str) -> BufferWatermark:
        mark = self._watermarks.get(label)
        if mark is None:
            if self.watermark_factory is not None:
                mark = self.watermark_factory(self.node, self.name, label)
            else:
                mark = BufferWatermark(self.node, self.name, label)
            self._watermarks[label] = mark
        return mark

    @property
    def watermarks(self) -> dict[str, BufferWatermark]:
        return self._watermarks

    def _queue_for(self, frame: EthernetFrame, now: int) -> deque:
        kind = frame.class_tag.kind
        if kind is TrafficClass.RC:
            return self.rc_queues.setdefault(frame.priority, deque())
        if kind is TrafficClass.AVB:
            sr_class = frame.class_tag.sr_class or "A"
            if sr_class not in self.cbs:
                self.cbs[sr_class] = CbsState(self._idle_slope(sr_class), self.link.rate,
                                              last_update=now)
            return self.avb_queues.setdefault(sr_class, deque())
        return self.be_queue

    def _idle_slope(self, sr_class: str) -> int:
        if sr_class in self.idle_slopes:
            return self.idle_slopes[sr_class]
        fraction = settings.AVB_CLASS_A_FRACTION if sr_class == "A" else settings.AVB_CLASS_B_FRACTION
        return int(self.link.rate * fraction)

    def _observe(self, label: str, frames: int, nbytes: int) -> None:
        self._watermark(label).observe(frames, nbytes)

    def _trace(self, now: int, label: str, frame: EthernetFrame, delta: int) -> None:
        if self.queue_trace is not None:
            fifo = frame.priority if frame.class_tag.kind is TrafficClass.RC else None
            self.queue_trace.append((now, label, fifo, delta, delta * frame.on_wire_len))

    def enqueue(self, frame: EthernetFrame, now: int) -> None:
        """Place a frame into its class queue and ask for service"""
        self._sync_cbs(now)
        tag = frame.class_tag
        if tag.kind is TrafficClass.TT:
            if self.tt_slots.get(tag.ident) is not None:
                raise TtBufferOverrun(self.node, self.name, tag.ident, now)
            self.tt_slots[tag.ident] = frame
            self._observe(tag.queue_label, 1, frame.on_wire_len)
            self._trace(now, tag.queue_label, frame, 1)
        else:
            fifo = self._queue_for(frame, now)
            if self.capacity is not None and len(fifo) >= self.capacity:
                raise QueueOverflow(f"{self.name}:{tag.queue_label}", self.capacity)
            fifo.append(frame)
            queued = self._queued_bytes.get(id(fifo), 0) + frame.on_wire_len
            self._queued_bytes[id(fifo)] = queued
            self._observe(tag.queue_label, len(fifo), queued)
            self._trace(now, tag.queue_label, frame, 1)
        self.request_service(now)

    # -- credit-based shaper ----------------------------------------------

    def _cbs_mode(self, sr_class: str) -> CbsMode:
        if self.transmitting_label == f"AVB:{sr_class}":
            return CbsMode.TRANSMITTING
        if self.avb_queues.get(sr_class):
            return CbsMode.WAITING
        return CbsMode.IDLE

    def _sync_cbs(self, now: int) -> None:
        for sr_class, state in self.cbs.items():
            cbs_advance(state, now, self._cbs_mode(sr_class))

    # -- transmission selection -------------------------------------------

    def _local(self, now: int) -> int:
        return self.clock.global_to_local_exact(now) if self.clock is not None else now

    def _global(self, local: int) -> int:
        return self.clock.local_to_global(local) if self.clock is not None else local

    def _guard_margin(self) -> int:
        # a resync may move the next window by up to two clock errors
        return 2 * self.clock.max_error() if self.clock is not None else 0

    def _candidates(self):
        for priority in sorted(self.rc_queues, reverse=True):
            yield "RC", self.rc_queues[priority]
        for sr_class in sorted(self.avb_queues):
            yield f"AVB:{sr_class}", self.avb_queues[sr_class]
        yield "BE", self.be_queue

    def select_next(self, now: int) -> Selection:
        """Pick the frame to start at now, or report when to look again"""
        for ct_id in self.tt_due:
            frame = self.tt_slots.get(ct_id)
            if frame is not None:
                return Selection(frame, None, f"TT:{ct_id}", now)

        wake_at = None
        local_now = None
        for label, fifo in self._candidates():
            if not fifo:
                continue
            frame = fifo[0]
            if label.startswith("AVB"):
                state = self.cbs[label.split(":")[1]]
                if not cbs_eligible(state):
                    eligible_at = now + cbs_time_to_eligible(state)
                    wake_at = eligible_at if wake_at is None else min(wake_at, eligible_at)
                    continue
            if self.schedule is not None and self.schedule.actions:
                if local_now is None:
                    local_now = self._local(now)
                duration = wire_duration(frame.on_wire_len, self.link.rate) + self._guard_margin()
                blocked = guard_block_until(self.schedule, local_now, duration)
                if blocked is not None:
                    retry = max(now + 1, self._global(blocked))
                    wake_at = retry if wake_at is None else min(wake_at, retry)
                    continue
            return Selection(frame, fifo, label, now)
        return Selection(wake_at=wake_at)

    def request_service(self, now: int) -> None:
        if self.transmitting is not None:
            return
        pending = self._service_event
        if pending is not None and not pending.cancelled and not pending.fired:
            if pending.fire_time <= now:
                return
            self.queue.cancel(pending)
        self._service_event = self.queue.at(now, self.name, ("service",), TieClass.QUEUE_SERVICE)

    def service(self, now: int) -> None:
        if self.transmitting is not None:
            return
        pending = self._service_event
        if pending is not None and not pending.fired:
            self.queue.cancel(pending)
        self._service_event = None
        self._sync_cbs(now)
        selection = self.select_next(now)
        if selection.frame is not None:
            self._start(selection, now)
        elif selection.wake_at is not None:
            self._service_event = self.queue.at(selection.wake_at, self.name, ("service",),
                                                TieClass.QUEUE_SERVICE)

    def _start(self, selection: Selection, now: int) -> None:
        frame = selection.frame
        if selection.queue is None:
            ct_id = frame.class_tag.ident
            self.tt_slots[ct_id] = None
            self.tt_due.remove(ct_id)
        else:
            selection.queue.popleft()
            self._queued_bytes[id(selection.queue)] -= frame.on_wire_len
        self._trace(now, selection.label, frame, -1)
        self.transmitting = frame
        self.transmitting_label = selection.label
        if self.cbs_trace is not None and selection.label.startswith("AVB"):
            state = self.cbs[selection.label.split(":")[1]]
            self.cbs_trace.append((now, selection.label, state.credit))
        duration = wire_duration(frame.on_wire_len, self.link.rate)
        self.busy_until = now + duration
        if frame.hop_trail and frame.hop_trail[-1].node == self.node:
            frame.hop_trail[-1].departure = now
        if self.record_transmissions:
            self.transmissions.append((now, self.busy_until, selection.label))
        self.queue.at(self.busy_until, self.name, ("tx_end",), TieClass.ARRIVAL)

    def tx_end(self, now: int) -> None:
        self._sync_cbs(now)
        frame = self.transmitting
        self.transmitting = None
        self.transmitting_label = None
        if self.on_transmitted is not None:
            self.on_transmitted(self, frame, now)
        self.service(now)

    # -- time-triggered dispatch ------------------------------------------

    def start_dispatch(self, now: int) -> None:
        """Arm one dispatch timer per scheduled ctID"""
        if self.schedule is None:
            return
        local_now = self.clock.global_to_local(now) if self.clock is not None else now
        for action in self.schedule.actions:
            self._next_dispatch[action.ct_id] = tt_dispatch_times(self.schedule, action.ct_id, local_now)
            self._arm(action.ct_id, now)

    def _arm(self, ct_id: int, now: int) -> None:
        fire = max(now, self._global(self._next_dispatch[ct_id]))
        self._dispatch_events[ct_id] = self.queue.at(fire, self.name, ("tt_dispatch", ct_id),
                                                     TieClass.TDMA_DISPATCH)

    def resync(self, now: int) -> None:
        """Recompute pending dispatch instants after the clock was corrected"""
        for ct_id, handle in list(self._dispatch_events.items()):
            self.queue.cancel(handle)
            self._arm(ct_id, now)

    def tt_dispatch(self, ct_id: int, now: int) -> None:
        period = self.schedule.period_of(self.schedule.action_for(ct_id))
        self._next_dispatch[ct_id] += period
        self._arm(ct_id, now)
        source = self.tt_sources.get(ct_id)
        if source is not None and self.tt_slots.get(ct_id) is None:
            self.enqueue(source(now), now)
        if self.tt_slots.get(ct_id) is None:
            self.tt_missed += 1
            return
        if ct_id not in self.tt_due:
            self.tt_due.append(ct_id)
        self.service(now)

    def handle(self, event) -> None:
        kind = event.payload[0]
        if kind == "service":
            self.service(event.fire_time)
        elif kind == "tx_end":
            self.tx_end(event.fire_time)
        elif kind == "tt_dispatch":
            self.tt_dispatch(event.payload[1], event.fire_time)
        elif kind == "enqueue":
            self.enqueue(event.payload[1], event.fire_time)
        else:
            raise ValueError(f"port {self.name} cannot handle '{kind}'")


@dataclass
class EnqueueAction:
    port: SwitchPort
    frame: EthernetFrame
    at: int


class Switch:
    """Store-and-forward switch with static per-flow forwarding"""

    def __init__(
        self,
        name: str,
        processing_delay: int,
        ports: dict[str, SwitchPort],
        forwarding: dict[str, list[str]],
        policing: Optional[dict[str, PolicingConfig]] = None,
        on_drop: Optional[Callable[[EthernetFrame, str, int], None]] = None,
    ):
        self.name = name
        self.processing_delay = processing_delay
        self.ports = ports
        self.forwarding = forwarding
        self.policing = policing or {}
        self.vl_history: dict[str, VlHistory] = {}
        self.on_drop = on_drop

    def _drop(self, frame: EthernetFrame, reason: str, t: int) -> list[EnqueueAction]:
        logger.debug(f"{self.name} dropped {frame.flow} ({reason}) at {t}ps")
        if self.on_drop is not None:
            self.on_drop(frame, reason, t)
        return []

    def forward(self, frame: EthernetFrame, ingress_port: str, t: int) -> list[EnqueueAction]:
        """Frame fully received from ingress_port at t; decide where it is queued"""
        frame.hop_trail.append(Hop(self.name, t))
        contract = self.policing.get(frame.flow)
        if contract is not None and frame.class_tag.kind is TrafficClass.RC:
            history = self.vl_history.setdefault(f"{ingress_port}:{frame.flow}", VlHistory())
            verdict = police_ingress(contract, frame, t, history)
            if not verdict.accepted:
                return self._drop(frame, f"policing:{verdict.reason}", t)
        egress = [peer for peer in self.forwarding.get(frame.flow, []) if peer != ingress_port]
        if not egress:
            return self._drop(frame, "no-route", t)
        at = t + self.processing_delay
        actions = []
        for index, peer in enumerate(egress):
            copy_ = frame if index == len(egress) - 1 else frame.replicate()
            actions.append(EnqueueAction(self.ports[peer], copy_, at))
        return actions
