"""
Deterministic event queue and simulation loop.

Time is an integer count of picoseconds. Events are totally ordered by
(fire_time, tie_class, seq); seq is the insertion counter, so events with
equal time and class fire in scheduling order.
"""
import heapq
import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Optional

from app.sim.errors import DispatchError, PastEvent, StopSimulation

logger = logging.getLogger(__name__)

PS_PER_NS = 10**3
PS_PER_US = 10**6
PS_PER_MS = 10**9
PS_PER_S = 10**12


class TieClass(IntEnum):
    """Order of simultaneous events; lower fires first"""

    CLOCK_SYNC = 0
    TDMA_DISPATCH = 1
    ARRIVAL = 2
    QUEUE_SERVICE = 3
    STATISTICS = 4


@dataclass(eq=False)
class Event:
    fire_time: int
    target: str
    payload: Any = None
    tie_class: int = TieClass.ARRIVAL
    seq: int = -1
    cancelled: bool = field(default=False, repr=False)
    fired: bool = field(default=False, repr=False)

    def sort_key(self) -> tuple[int, int, int]:
        return (self.fire_time, self.tie_class, self.seq)

    def cancel(self) -> None:
        self.cancelled = True

    def describe(self) -> str:
        kind = self.payload[0] if isinstance(self.payload, tuple) and self.payload else self.payload
        return f"event#{self.seq} t={self.fire_time}ps target={self.target} kind={kind}"


@dataclass
class RunSummary:
    events_processed: int
    final_time: int
    stopped_early: bool = False
    stop_reason: Optional[str] = None
    stop_event: Optional[Event] = None


class EventQueue:
    """Binary-heap event queue with lazy cancellation"""

    def __init__(self, start_time: int = 0, record_log: bool = False):
        if start_time < 0:
            raise ValueError("simulation time cannot be negative")
        self.current_time = start_time
        self._heap: list[tuple[int, int, int, Event]] = []
        self._next_seq = 0
        self._live = 0
        self.log: Optional[list[tuple[int, int, int, str]]] = [] if record_log else None

    def __len__(self) -> int:
        return self._live

    def schedule(self, event: Event) -> Event:
        """Insert an event; the returned event doubles as its cancellation handle"""
        if event.fire_time < self.current_time:
            raise PastEvent(event.fire_time, self.current_time)
        event.seq = self._next_seq
        self._next_seq += 1
        heapq.heappush(self._heap, (event.fire_time, event.tie_class, event.seq, event))
        self._live += 1
        return event

    def at(self, fire_time: int, target: str, payload: Any = None,
           tie_class: int = TieClass.ARRIVAL) -> Event:
        return self.schedule(Event(fire_time, target, payload, tie_class))

    def cancel(self, handle: Event) -> None:
        if not handle.cancelled and not handle.fired and handle.seq >= 0:
            handle.cancel()
            self._live -= 1

    def _discard_cancelled(self) -> None:
        while self._heap and self._heap[0][3].cancelled:
            heapq.heappop(self._heap)

    def peek_time(self) -> Optional[int]:
        self._discard_cancelled()
        return self._heap[0][0] if self._heap else None

    def pop_next(self) -> Optional[Event]:
        self._discard_cancelled()
        if not self._heap:
            return None
        event = heapq.heappop(self._heap)[3]
        event.fired = True
        self._live -= 1
        self.current_time = event.fire_time
        if self.log is not None:
            self.log.append((event.fire_time, int(event.tie_class), event.seq, event.target))
        return event

    def run_until(self, t_end: int, dispatch: Callable[[Event], None]) -> RunSummary:
        """Process every event with fire_time <= t_end, or until dispatch raises StopSimulation"""
        if t_end < self.current_time:
            raise PastEvent(t_end, self.current_time)
        processed = 0
        while True:
            next_time = self.peek_time()
            if next_time is None or next_time > t_end:
                break
            event = self.pop_next()
            processed += 1
            try:
                dispatch(event)
            except StopSimulation as stop:
                logger.info(f"Run stopped early at {event.fire_time}ps: {stop.reason}")
                return RunSummary(processed, self.current_time, True, stop.reason, event)
            except DispatchError:
                raise
            except Exception as exc:
                raise DispatchError(event, exc) from exc
        self.current_time = t_end
        return RunSummary(processed, t_end)
