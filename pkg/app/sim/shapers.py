"""
Per-port and per-stream shaping state machines.

* credit-based shaper (AVB), exact integer credit in units of 1e-12 bit
* time-triggered dispatch schedule with guard-band admission
* bandwidth allocation gap (BAG) gating for rate-constrained virtual links
* ingress policing of rate-constrained virtual links
"""
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from app.sim.errors import UnknownCtId


class CbsMode(str, Enum):
    TRANSMITTING = "transmitting"
    WAITING = "waiting"
    IDLE = "idle"


@dataclass
class CbsState:
    idle_slope: int
    port_rate: int
    credit: int = 0
    last_update: int = 0
    queue_empty: bool = True

    def __post_init__(self):
        if not 0 < self.idle_slope < self.port_rate:
            raise ValueError(
                f"idle slope {self.idle_slope}b/s must lie strictly between 0 and the port rate {self.port_rate}b/s"
            )

    @property
    def send_slope(self) -> int:
        return self.idle_slope - self.port_rate


def cbs_advance(state: CbsState, now: int, mode: CbsMode) -> CbsState:
    """Evolve the credit from last_update to now under the mode that held in between"""
    if now < state.last_update:
        raise ValueError(f"credit update to {now}ps precedes last update {state.last_update}ps")
    elapsed = now - state.last_update
    if mode is CbsMode.TRANSMITTING:
        state.credit += state.send_slope * elapsed
    elif mode is CbsMode.WAITING:
        state.credit += state.idle_slope * elapsed
    elif state.credit > 0:
        state.credit = 0
    elif state.credit < 0:
        state.credit = min(0, state.credit + state.idle_slope * elapsed)
    state.last_update = now
    state.queue_empty = mode is CbsMode.IDLE
    return state


def cbs_eligible(state: CbsState) -> bool:
    return state.credit >= 0


def cbs_time_to_eligible(state: CbsState) -> int:
    """Picoseconds of waiting until the credit climbs back to zero"""
    if state.credit >= 0:
        return 0
    deficit = -state.credit
    return -(-deficit // state.idle_slope)


@dataclass(frozen=True)
class TtAction:
    offset: int
    ct_id: int
    egress_port: str
    reserved_duration: int
    period: Optional[int] = None


@dataclass
class TtSchedule:
    """Dispatch plan of one egress port; offsets are in the port owner's local time"""

    cycle: int
    actions: list[TtAction] = field(default_factory=list)

    def __post_init__(self):
        if self.cycle <= 0:
            raise ValueError("schedule cycle must be positive")
        self.actions = sorted(self.actions, key=lambda action: action.offset)
        self._windows: Optional[list[tuple[int, int, int]]] = None

    def period_of(self, action: TtAction) -> int:
        return action.period or self.cycle

    def action_for(self, ct_id: int) -> TtAction:
        for action in self.actions:
            if action.ct_id == ct_id:
                return action
        raise UnknownCtId(f"ctID {ct_id} has no action in this schedule")

    def windows(self) -> list[tuple[int, int, int]]:
        """Every reserved window (start, end, ct_id) whose start lies in one cycle"""
        if self._windows is None:
            expanded = []
            for action in self.actions:
                period = self.period_of(action)
                for start in range(action.offset, self.cycle, period):
                    expanded.append((start, start + action.reserved_duration, action.ct_id))
            self._windows = sorted(expanded)
        return self._windows

    def add(self, action: TtAction) -> None:
        self.actions = sorted([*self.actions, action], key=lambda a: a.offset)
        self._windows = None

    def validate(self) -> None:
        """Raise ValueError when two windows overlap (cycle wrap included)"""
        previous_offset = None
        for action in self.actions:
            if not 0 <= action.offset < self.period_of(action):
                raise ValueError(f"ctID {action.ct_id} offset {action.offset}ps outside its period")
            if previous_offset is not None and action.offset <= previous_offset:
                raise ValueError("schedule offsets must be strictly increasing")
            previous_offset = action.offset
        windows = self.windows()
        for (start_a, end_a, ct_a), (start_b, _, ct_b) in zip(windows, windows[1:]):
            if start_b < end_a:
                raise ValueError(f"windows of ctID {ct_a} and ctID {ct_b} overlap")
        if windows and windows[-1][1] > self.cycle + windows[0][0]:
            raise ValueError("last window wraps into the first window of the next cycle")


def tt_dispatch_times(schedule: TtSchedule, ct_id: int, local_now: int) -> int:
    """Next local dispatch instant of ct_id at or after local_now"""
    action = schedule.action_for(ct_id)
    period = schedule.period_of(action)
    return local_now + (action.offset - local_now) % period


def guard_block_until(schedule: Optional[TtSchedule], now: int, tx_duration: int) -> Optional[int]:
    """End of the earliest reserved window that [now, now + tx_duration) would overlap, or None"""
    if tx_duration <= 0:
        raise ValueError("tx_duration must be positive")
    if schedule is None or not schedule.actions:
        return None
    end = now + tx_duration
    cycle = schedule.cycle
    blocked_until = None
    for base in range((now // cycle - 1) * cycle, (end // cycle + 1) * cycle, cycle):
        for start, stop, _ in schedule.windows():
            window_start, window_end = base + start, base + stop
            if window_start < end and now < window_end:
                if blocked_until is None or window_end < blocked_until:
                    blocked_until = window_end
    return blocked_until


def guard_admit(schedule: Optional[TtSchedule], now: int, tx_duration: int) -> bool:
    return guard_block_until(schedule, now, tx_duration) is None


@dataclass
class BagState:
    bag: int
    max_frame_bytes: int = 1518
    last_release: Optional[int] = None

    def __post_init__(self):
        if self.bag <= 0:
            raise ValueError("BAG must be positive")


def bag_gate(state: BagState, now: int) -> int:
    """Earliest instant a frame offered at now may be released"""
    if state.last_release is None:
        return now
    return max(now, state.last_release + state.bag)


def bag_release(state: BagState, released_at: int) -> None:
    state.last_release = released_at


@dataclass(frozen=True)
class PolicingConfig:
    bag: int
    max_frame_bytes: int
    jitter_allowance: int = 0


@dataclass
class VlHistory:
    previous_accepted: Optional[int] = None
    accepted: int = 0
    dropped_size: int = 0
    dropped_rate: int = 0


@dataclass(frozen=True)
class PoliceVerdict:
    accepted: bool
    reason: Optional[str] = None


ACCEPT = PoliceVerdict(True)


def police_ingress(vl_config: PolicingConfig, frame, arrival: int, vl_history: VlHistory) -> PoliceVerdict:
    """Check an arriving rate-constrained frame against its virtual link contract"""
    if frame.on_wire_len > vl_config.max_frame_bytes:
        vl_history.dropped_size += 1
        return PoliceVerdict(False, "size")
    if (vl_history.previous_accepted is not None
            and arrival < vl_history.previous_accepted + vl_config.bag - vl_config.jitter_allowance):
        vl_history.dropped_rate += 1
        return PoliceVerdict(False, "rate")
    vl_history.previous_accepted = arrival
    vl_history.accepted += 1
    return ACCEPT
