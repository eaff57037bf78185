"""
Greedy first-fit TDMA schedule generation for time-triggered flows.

Flows are placed in declaration order. Along every branch of a flow the
dispatch offset of hop k is at least the offset of hop k-1 plus that hop's
transmission, propagation, the next device's processing delay and a
synchronisation slack of twice the worst clock error in the network. Each
reservation covers the transmission plus a guard margin and must not
overlap any other reservation of the same port within one cycle.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

from app.andl.validator import NetworkModel
from app.config import settings
from app.sim.errors import Infeasible, LcmOverflow
from app.sim.ethernet import wire_duration
from app.sim.shapers import TtAction, TtSchedule

logger = logging.getLogger(__name__)


@dataclass
class _Placed:
    offset: int
    tx: int
    propagation: int


def tt_cycle(periods: list[int], cap: Optional[int] = None) -> int:
    cap = settings.SCHEDULE_CYCLE_CAP if cap is None else cap
    cycle = 1
    for period in periods:
        cycle = math.lcm(cycle, period)
        if cycle > cap:
            raise LcmOverflow(f"cycle {cycle}ps of periods {sorted(set(periods))} exceeds the {cap}ps cap")
    return cycle


def sync_slack(model: NetworkModel) -> int:
    errors = [model.devices[name].clock.max_error for name in model.ethernet_devices()]
    return 2 * max(errors, default=0)


def _align(value: int, tick: int) -> int:
    return -(-value // tick) * tick


def first_fit(schedule: TtSchedule, earliest: int, window: int, period: int, tick: int) -> int:
    """Smallest tick-aligned offset >= earliest whose repetitions avoid every reserved window"""
    offset = _align(earliest, tick)
    reserved = schedule.windows()
    while True:
        if offset + window > period:
            raise Infeasible(f"no {window}ps window fits after {earliest}ps within period {period}ps")
        conflict_end = None
        for base in range(0, schedule.cycle, period):
            start, end = base + offset, base + offset + window
            for other_start, other_end, _ in reserved:
                if other_start < end and start < other_end:
                    candidate = other_end - base
                    conflict_end = candidate if conflict_end is None else max(conflict_end, candidate)
        if conflict_end is None:
            return offset
        offset = _align(conflict_end, tick)


def generate_tt_schedule(model: NetworkModel, cycle_cap: Optional[int] = None) -> dict[str, TtSchedule]:
    """Per-port dispatch plans for every time-triggered flow of the model"""
    flows = [flow for flow in model.flows.values() if flow.mapping.kind == "tt"]
    if not flows:
        model.schedules = {}
        return {}
    for flow in flows:
        if not flow.period:
            raise Infeasible(f"time-triggered flow {flow.key} has no period")
    cycle = tt_cycle([flow.period for flow in flows], cycle_cap)
    slack = sync_slack(model)
    schedules: dict[str, TtSchedule] = {}

    for flow in flows:
        placed: dict[tuple[str, str], _Placed] = {}
        for branch in flow.branches:
            previous: Optional[_Placed] = None
            for node, peer in branch:
                if (node, peer) in placed:
                    previous = placed[(node, peer)]
                    continue
                device = model.devices[node]
                link = model.link_between(node, peer)
                tx = wire_duration(flow.on_wire_len, link.rate)
                tick = device.clock.tick
                if previous is None:
                    earliest = 0
                else:
                    earliest = previous.offset + previous.tx + previous.propagation + device.processing_delay + slack
                window = tx + slack + tick
                port = f"{node}->{peer}"
                schedule = schedules.setdefault(port, TtSchedule(cycle))
                try:
                    offset = first_fit(schedule, earliest, window, flow.period, tick)
                except Infeasible as exc:
                    raise Infeasible(f"port {port}, flow {flow.key} (ctID {flow.mapping.ct_id}): {exc}") from None
                schedule.add(TtAction(offset, flow.mapping.ct_id, port, window, flow.period))
                previous = placed[(node, peer)] = _Placed(offset, tx, link.propagation)

    for port, schedule in schedules.items():
        schedule.validate()
    logger.info(f"{model.name}: scheduled {len(flows)} TT flows on {len(schedules)} ports, cycle {cycle}ps")
    model.schedules = schedules
    return schedules


def schedule_rows(schedules: dict[str, TtSchedule]) -> list[dict]:
    """Stable (port, offset) ordered listing used by the CLI and the API"""
    rows = []
    for port in sorted(schedules):
        for action in schedules[port].actions:
            rows.append({
                "port": port,
                "offset_ps": action.offset,
                "ct_id": action.ct_id,
                "window_ps": action.reserved_duration,
                "period_ps": schedules[port].period_of(action),
            })
    return rows
