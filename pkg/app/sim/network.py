"""
Executable network assembled from a validated NetworkModel.

Every component is addressed on the event queue by name: devices by their
ANDL name, egress ports as "node->peer", traffic sources as
"source:<message>" and clock synchronisation as "sync:<device>".
"""
import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from app.andl.scheduler import generate_tt_schedule
from app.andl.validator import CAN, ETHERNET, EthernetFlow, MessageModel, NetworkModel
from app.config import settings
from app.results.constraints import ConstraintChecker, ConstraintRule, Violation
from app.results.pcap import frame_bytes
from app.results.stats import StatsCollector
from app.sim.can import CanBus, CanFrame
from app.sim.clocks import LocalClock, Oscillator
from app.sim.errors import QueueOverflow, StopSimulation
from app.sim.ethernet import EthernetFrame, Hop, Link, Switch, SwitchPort
from app.sim.events import Event, EventQueue, RunSummary, TieClass
from app.sim.gateway import ETHERNET as GW_ETHERNET
from app.sim.gateway import Gateway, Pool, Release, RouteEntry, RoutingTable, unpack
from app.sim.shapers import BagState, PolicingConfig, bag_gate, bag_release

logger = logging.getLogger(__name__)

LATENCY_METRIC = "rxMessageAge:vector"


@dataclass
class RunResult:
    network: str
    seed: int
    until: int
    summary: RunSummary
    collector: StatsCollector
    violations: list[Violation] = field(default_factory=list)
    trace: list[tuple[int, bytes]] = field(default_factory=list)
    samples: list[tuple[int, str, str, Fraction]] = field(default_factory=list)
    releases: list[Release] = field(default_factory=list)
    tt_missed: dict[str, int] = field(default_factory=dict)
    bus_busy: dict[str, int] = field(default_factory=dict)

    @property
    def stopped_early(self) -> bool:
        return self.summary.stopped_early


class Simulation:
    """One isolated run: own queue, clocks, random stream and collectors"""

    def __init__(
        self,
        model: NetworkModel,
        seed: Optional[int] = None,
        constraints: Optional[list[ConstraintRule]] = None,
        capture: bool = False,
        window: Optional[int] = None,
        record_log: bool = False,
    ):
        self.model = model
        if seed is None:
            seed = model.seed if model.seed is not None else settings.DEFAULT_SEED
        self.seed = seed
        self.queue = EventQueue(record_log=record_log)
        self.rng = random.Random(seed)
        self.collector = StatsCollector(window or settings.STATS_WINDOW)
        self.checker = ConstraintChecker(constraints) if constraints else None
        self.capture = capture
        self.trace: list[tuple[int, bytes]] = []
        self.samples: list[tuple[int, str, str, Fraction]] = []
        self.addresses = {name: index + 1 for index, name in enumerate(model.devices)}

        self.clocks: dict[str, LocalClock] = {}
        self.ports: dict[str, SwitchPort] = {}
        self.device_ports: dict[str, dict[str, SwitchPort]] = {}
        self.switches: dict[str, Switch] = {}
        self.buses: dict[str, CanBus] = {}
        self.gateways: dict[str, Gateway] = {}
        self.bags: dict[str, BagState] = {}
        self.handlers: dict[str, Callable[[Event], None]] = {}
        self._messages = {message.name: message for message in model.messages}

        if any(flow.mapping.kind == "tt" for flow in model.flows.values()) and not model.schedules:
            generate_tt_schedule(model)
        self._build()

    # -- assembly ---------------------------------------------------------

    def _build(self) -> None:
        model = self.model
        for name in model.ethernet_devices():
            clock = model.devices[name].clock
            self.clocks[name] = LocalClock(Oscillator(clock.drift_ppm, clock.tick), clock.sync_interval,
                                           clock.sync_precision)
        for link in model.links:
            if link.medium == ETHERNET:
                self._add_port(link.a, link.b, link)
                self._add_port(link.b, link.a, link)
        for name, device in model.devices.items():
            if device.kind == "switch":
                self._add_switch(name)
            elif device.kind == "canLink":
                bus = CanBus(name, device.bitrate, self.queue, self._delivered)
                for member in model.bus_members(name):
                    bus.attach(member)
                self.buses[name] = bus
                self.handlers[name] = bus.handle
            elif device.kind == "gateway":
                self._add_gateway(name)
            else:
                self.handlers[name] = lambda event, node=name: self._node_event(node, event)
        for name in self.clocks:
            self.handlers[f"sync:{name}"] = lambda event, node=name: self._sync(node, event.fire_time)
        for message in model.messages:
            self.handlers[f"source:{message.name}"] = lambda event, m=message: self._release(m, event.fire_time)

    def _idle_slopes(self, node: str, peer: str) -> dict[str, int]:
        slopes: dict[str, int] = {}
        for flow in self.model.flows.values():
            mapping = flow.mapping
            if mapping.kind == "avb" and mapping.idle_slope and (node, peer) in flow.ports:
                slopes[mapping.sr_class] = slopes.get(mapping.sr_class, 0) + mapping.idle_slope
        return slopes

    def _add_port(self, node: str, peer: str, link) -> None:
        port = SwitchPort(
            node=node,
            peer=peer,
            link=Link(link.rate, link.propagation),
            queue=self.queue,
            clock=self.clocks.get(node),
            schedule=self.model.schedules.get(f"{node}->{peer}"),
            idle_slopes=self._idle_slopes(node, peer),
            capacity=self.model.devices[node].queue_capacity,
            watermark_factory=self.collector.buffer,
            on_transmitted=self._transmitted,
        )
        if self.queue.log is not None:
            port.queue_trace = []
        self.ports[port.name] = port
        self.device_ports.setdefault(node, {})[peer] = port
        self.handlers[port.name] = lambda event, p=port: self._port_event(p, event)

    def _add_switch(self, name: str) -> None:
        forwarding = {}
        policing = {}
        for flow in self.model.flows.values():
            if name in flow.forwarding:
                forwarding[flow.key] = list(flow.forwarding[name])
                mapping = flow.mapping
                if mapping.kind == "rc" and mapping.police is not None:
                    policing[flow.key] = PolicingConfig(mapping.bag, flow.on_wire_len, mapping.police)
        self.switches[name] = Switch(name, self.model.devices[name].processing_delay,
                                     self.device_ports.get(name, {}), forwarding, policing, self._dropped)
        self.handlers[name] = lambda event, n=name: self._switch_event(n, event)

    def _gateway_flow(self, message: MessageModel, gateway: str) -> EthernetFlow:
        pool = message.pools.get(gateway)
        return self.model.flows[f"pool:{gateway}.{pool.pool}" if pool else message.name]

    def _add_gateway(self, name: str) -> None:
        model = self.model
        routing = RoutingTable()
        pools: dict[str, Pool] = {}
        holdups: dict[str, int] = {}
        for message in model.messages:
            for path in message.routes.values():
                for index in range(1, len(path) - 1):
                    if path[index] != name:
                        continue
                    inbound = model.link_between(path[index - 1], name)
                    outbound = model.link_between(name, path[index + 1])
                    if inbound.medium == CAN:
                        key = (path[index - 1], message.mappings[inbound.segment].can_id)
                    else:
                        key = (GW_ETHERNET, message.name)
                    if outbound.medium == CAN:
                        entry = RouteEntry(path[index + 1], message.name,
                                           can_id=message.mappings[outbound.segment].can_id,
                                           dlc=min(message.payload, 8))
                    else:
                        flow = self._gateway_flow(message, name)
                        pool = message.pools.get(name)
                        entry = RouteEntry(GW_ETHERNET, flow.key, class_tag=flow.mapping.class_tag(),
                                           priority=flow.mapping.priority,
                                           egress=tuple(peer for node, peer in flow.ports if node == name),
                                           payload_len=flow.payload, pool=pool.pool if pool else None,
                                           bag=flow.mapping.bag if flow.mapping.kind == "rc" else None)
                        if pool is not None:
                            members = frozenset(flow.messages)
                            pools.setdefault(pool.pool, Pool(pool.pool, members))
                            holdups[message.name] = pool.holdup
                    if entry not in routing.entries.get(key, []):
                        routing.add(key, entry)
        gateway = Gateway(name, self.queue, routing, self.device_ports.get(name, {}), pools, holdups,
                          model.devices[name].processing_delay,
                          lambda frame, reason, now, gw=name: self._dropped(frame, reason, now, gw))
        self.gateways[name] = gateway
        self.handlers[name] = lambda event, gw=gateway: self._gateway_event(gw, event)

    # -- traffic sources --------------------------------------------------

    def _first_hops(self, message: MessageModel) -> list[str]:
        hops: list[str] = []
        for path in message.routes.values():
            if path[1] not in hops:
                hops.append(path[1])
        return hops

    def _start_sources(self) -> None:
        for message in self.model.messages:
            if not message.routes:
                continue
            flow = self.model.flows.get(message.name)
            if flow is not None and flow.origin == message.sender and flow.mapping.kind == "tt":
                ports = self.device_ports.get(message.sender, {})
                for peer in flow.first_hops:
                    ports[peer].tt_sources[flow.mapping.ct_id] = (
                        lambda now, f=flow, m=message, p=peer: self._ethernet_frame(m, f, p, now))
                if all(self.model.link_between(message.sender, hop).medium == ETHERNET
                       for hop in self._first_hops(message)):
                    continue
            self.queue.at(message.offset, f"source:{message.name}", ("release", 0), TieClass.ARRIVAL)

    def _ethernet_frame(self, message: MessageModel, flow: EthernetFlow, peer: str, now: int) -> EthernetFrame:
        receivers = message.receivers
        return EthernetFrame(
            src=message.sender,
            dst=receivers[0] if len(receivers) == 1 else "*",
            class_tag=flow.mapping.class_tag(),
            priority=flow.mapping.priority,
            payload_len=flow.payload,
            created_at=now,
            flow=flow.key,
            hop_trail=[Hop(message.sender, now)],
        )

    def _release(self, message: MessageModel, now: int) -> None:
        """Offer one period's burst of a message to each first hop"""
        for hop in self._first_hops(message):
            link = self.model.link_between(message.sender, hop)
            for _ in range(message.burst):
                if link.medium == CAN:
                    mapping = message.mappings[link.segment]
                    frame = CanFrame(mapping.can_id, message.payload, created_at=now, flow=message.name,
                                     hop_trail=[Hop(message.sender, now)])
                    self.buses[hop].submit(message.sender, frame, now)
                    continue
                flow = self.model.flows[message.name]
                if flow.mapping.kind == "tt":
                    break
                port = self.device_ports[message.sender][hop]
                frame = self._ethernet_frame(message, flow, hop, now)
                if flow.mapping.kind == "rc":
                    bag = self.bags.setdefault(port.name + ":" + flow.key, BagState(flow.mapping.bag))
                    at = bag_gate(bag, now)
                    bag_release(bag, at)
                    if at > now:
                        self.queue.at(at, port.name, ("enqueue", frame), TieClass.ARRIVAL)
                        continue
                self._enqueue(port, frame, now)
        if message.period:
            self.queue.at(now + message.period, f"source:{message.name}", ("release", 0), TieClass.ARRIVAL)

    # -- event handlers ---------------------------------------------------

    def _enqueue(self, port: SwitchPort, frame: EthernetFrame, now: int) -> None:
        try:
            port.enqueue(frame, now)
        except QueueOverflow:
            self.collector.buffer(port.node, port.name, frame.class_tag.queue_label).drops += 1
            self._dropped(frame, "overflow", now)

    def _port_event(self, port: SwitchPort, event: Event) -> None:
        if event.payload[0] == "enqueue":
            self._enqueue(port, event.payload[1], event.fire_time)
        else:
            port.handle(event)

    def _transmitted(self, port: SwitchPort, frame: EthernetFrame, now: int) -> None:
        self.queue.at(now + port.link.propagation_delay, port.peer, ("arrival", port.node, frame),
                      TieClass.ARRIVAL)

    def _capture(self, frame: EthernetFrame, now: int) -> None:
        if self.capture:
            self.trace.append((now, frame_bytes(frame, self.addresses)))

    def _switch_event(self, name: str, event: Event) -> None:
        _, ingress, frame = event.payload
        self._capture(frame, event.fire_time)
        for action in self.switches[name].forward(frame, ingress, event.fire_time):
            self.queue.at(action.at, action.port.name, ("enqueue", action.frame), TieClass.ARRIVAL)

    def _node_event(self, node: str, event: Event) -> None:
        _, _, frame = event.payload
        now = event.fire_time
        self._capture(frame, now)
        frame.hop_trail.append(Hop(node, now))
        self._record_ethernet(node, frame, now)

    def _record_ethernet(self, node: str, frame: EthernetFrame, now: int) -> None:
        if frame.inner:
            for inner in unpack(frame):
                self._record(node, inner.flow, inner, now)
        else:
            for name in self._flow_messages(frame.flow):
                self._record(node, name, frame, now)

    def _gateway_event(self, gateway: Gateway, event: Event) -> None:
        if event.payload[0] != "arrival":
            gateway.handle(event)
            return
        _, _, frame = event.payload
        now = event.fire_time
        self._capture(frame, now)
        if self._hosts_receiver(gateway.name, frame):
            local = frame.replicate()
            local.hop_trail.append(Hop(gateway.name, now))
            self._record_ethernet(gateway.name, local, now)
        keys = [inner.flow for inner in frame.inner] if frame.inner else [frame.flow]
        if any((GW_ETHERNET, key) in gateway.routing.entries for key in keys):
            gateway.receive_ethernet(frame, now)

    def _hosts_receiver(self, node: str, frame) -> bool:
        names = [inner.flow for inner in frame.inner] if frame.inner else self._flow_messages(frame.flow)
        return any(node in self._messages[name].receivers for name in names if name in self._messages)

    def _delivered(self, bus: CanBus, sender: str, frame: CanFrame, now: int) -> None:
        for member in self.model.bus_members(bus.name):
            if member == sender:
                continue
            message = self._messages.get(frame.flow)
            if message is not None and member in message.receivers:
                local = frame.replicate()
                local.hop_trail.append(Hop(member, now))
                self._record(member, message.name, local, now)
            gateway = self.gateways.get(member)
            if gateway is not None and (bus.name, frame.can_id) in gateway.routing.entries:
                gateway.receive_can(bus.name, frame.replicate(), now)

    def _sync(self, node: str, now: int) -> None:
        clock = self.clocks[node]
        clock.apply_sync(now, self.rng)
        for port in self.device_ports.get(node, {}).values():
            port.resync(now)
        if clock.sync_interval:
            self.queue.at(now + clock.sync_interval, f"sync:{node}", ("sync",), TieClass.CLOCK_SYNC)

    # -- accounting -------------------------------------------------------

    def _flow_messages(self, key: str) -> list[str]:
        flow = self.model.flows.get(key)
        return list(flow.messages) if flow is not None else [key]

    def _record(self, node: str, name: str, frame, now: int) -> None:
        message = self._messages.get(name)
        if message is None or node not in message.receivers:
            return
        self.collector.record_latency(message.stream_key(node), frame, message.traffic_class)
        if self.checker is None:
            return
        module = f"{self.model.name}.{node}"
        value = Fraction(frame.hop_trail[-1].arrival - frame.created_at, 10**12)
        self.samples.append((now, module, LATENCY_METRIC, value))
        violations, stop = self.checker.check(module, LATENCY_METRIC, value, now)
        if stop:
            violation = next(v for v in violations if v.action == "stop")
            raise StopSimulation(violation.describe(), violation)

    def _dropped(self, frame, reason: str, now: int, at: Optional[str] = None) -> None:
        if getattr(frame, "inner", None):
            names = [inner.flow for inner in frame.inner]
        elif isinstance(frame, CanFrame):
            names = [frame.flow]
        else:
            names = self._flow_messages(frame.flow)
        for name in names:
            message = self._messages.get(name)
            if message is None:
                continue
            if at is not None and at in message.receivers and reason == "no-route":
                continue
            logger.warning(f"{self.model.name}: {name} dropped ({reason}) at {now}ps")
            for receiver in message.receivers:
                self.collector.count_drop(message.stream_key(receiver), reason, message.traffic_class)

    # -- run --------------------------------------------------------------

    def start(self) -> None:
        for name in self.clocks:
            self._sync(name, 0)
        for port in self.ports.values():
            port.start_dispatch(0)
        self._start_sources()

    def run(self, until: Optional[int] = None) -> RunResult:
        if until is None:
            until = self.model.sim_time_limit or settings.DEFAULT_SIM_TIME
        if until <= 0:
            raise ValueError("simulation duration must be positive")
        logger.info(f"Running {self.model.name} for {until}ps with seed {self.seed}")
        self.start()
        summary = self.queue.run_until(until, self.dispatch)
        return RunResult(
            network=self.model.name,
            seed=self.seed,
            until=until,
            summary=summary,
            collector=self.collector,
            violations=list(self.checker.violations) if self.checker else [],
            trace=self.trace,
            samples=self.samples,
            releases=[release for gw in self.gateways.values() for release in gw.releases],
            tt_missed={name: port.tt_missed for name, port in self.ports.items() if port.tt_missed},
            bus_busy={name: bus.busy_time for name, bus in self.buses.items()},
        )

    def dispatch(self, event: Event) -> None:
        self.handlers[event.target](event)


def simulate(model: NetworkModel, until: Optional[int] = None, seed: Optional[int] = None,
             constraints: Optional[list[ConstraintRule]] = None, capture: bool = False) -> RunResult:
    return Simulation(model, seed, constraints, capture).run(until)
