"""
Semantic validation: resolves an ANDL syntax tree into a NetworkModel.

The model is everything the simulator needs: devices with their clock and
forwarding parameters, Ethernet links and CAN attachments grouped by
segment, every message with its per-segment representation and its route
to each receiver, and the Ethernet flows derived from those routes.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from app.andl.ast import AndlError, Ast, Body, Diagnostic, MappingEntry, Message, Param, TypeDef, Value
from app.andl.units import UnitError, format_rate, parse_quantity
from app.config import settings
from app.sim.can import MAX_CAN_ID, MAX_DLC
from app.sim.ethernet import HEADER_BYTES, FCS_BYTES, MAX_PAYLOAD_BYTES, MIN_FRAME_BYTES, ClassTag
from app.sim.gateway import MAX_POOLED_FRAMES, encapsulated_size
from app.sim.shapers import TtSchedule

logger = logging.getLogger(__name__)

ETHERNET = "ethernet"
CAN = "can"
FORWARDING_KINDS = {"switch", "canLink", "gateway"}
ENDPOINT_KINDS = {"node", "gateway"}

_CLOCK_PARAMS = {"drift": "number", "tick": "time", "syncPrecision": "time", "syncInterval": "time"}
DEVICE_PARAMS = {
    "node": {**_CLOCK_PARAMS, "queueCapacity": "number"},
    "switch": {**_CLOCK_PARAMS, "queueCapacity": "number", "processingDelay": "time"},
    "gateway": {**_CLOCK_PARAMS, "queueCapacity": "number", "processingDelay": "time"},
    "canLink": {"bitrate": "rate"},
}
LINK_PARAMS = {"bandwidth": "rate", "propagationDelay": "time"}
MESSAGE_PARAMS = {"payload": "size", "period": "time", "offset": "time", "burst": "number"}
MAPPING_PARAMS = {
    "can": {"id": "number"},
    "tt": {"ctID": "number"},
    "rc": {"vlID": "number", "bag": "time", "priority": "number", "police": "time"},
    "avb": {"streamID": "number", "srClass": "name", "idleSlope": "rate"},
    "be": {"priority": "number"},
    "pool": {"holdUp": "time"},
}

OVERRIDES = {
    "cross_traffic_frame_size": "size",
    "processing_delay": "time",
    "sync_precision": "time",
    "sync_interval": "time",
    "drift_ppm": "number",
    "tick_length": "time",
    "can_bitrate": "rate",
    "sim_time_limit": "time",
    "seed": "number",
}


# -- model ----------------------------------------------------------------

@dataclass
class ClockParams:
    drift_ppm: Fraction = Fraction(0)
    tick: int = 1
    sync_precision: int = 0
    sync_interval: int = 0

    @property
    def max_error(self) -> int:
        drift = abs(self.drift_ppm) * self.sync_interval / 10**6
        return self.sync_precision + -(-drift.numerator // drift.denominator) + self.tick


@dataclass
class DeviceModel:
    name: str
    kind: str
    clock: ClockParams = field(default_factory=ClockParams)
    processing_delay: int = 0
    queue_capacity: Optional[int] = None
    bitrate: Optional[int] = None
    line: int = field(default=0, compare=False)


@dataclass
class LinkModel:
    a: str
    b: str
    segment: str
    medium: str
    rate: int = 0
    propagation: int = 0
    line: int = field(default=0, compare=False)

    def other(self, device: str) -> str:
        return self.b if device == self.a else self.a


@dataclass
class MappingModel:
    segment: str
    kind: str
    can_id: Optional[int] = None
    ct_id: Optional[int] = None
    vl_id: Optional[int] = None
    stream_id: Optional[int] = None
    sr_class: str = "A"
    priority: int = 0
    bag: Optional[int] = None
    police: Optional[int] = None
    idle_slope: Optional[int] = None
    line: int = field(default=0, compare=False)

    def class_tag(self) -> ClassTag:
        if self.kind == "tt":
            return ClassTag.tt(self.ct_id)
        if self.kind == "rc":
            return ClassTag.rc(self.vl_id)
        if self.kind == "avb":
            return ClassTag.avb(self.stream_id, self.sr_class)
        return ClassTag.be()


@dataclass
class PoolMapping:
    gateway: str
    pool: str
    holdup: int
    line: int = field(default=0, compare=False)


@dataclass
class MessageModel:
    name: str
    sender: str
    receivers: list[str]
    payload: int
    period: Optional[int] = None
    offset: int = 0
    burst: int = 1
    mappings: dict[str, MappingModel] = field(default_factory=dict)
    pools: dict[str, PoolMapping] = field(default_factory=dict)
    routes: dict[str, list[str]] = field(default_factory=dict)
    traffic_class: str = "CAN"
    line: int = field(default=0, compare=False)

    def stream_key(self, receiver: str) -> str:
        return f"{self.name}->{receiver}"


@dataclass
class EthernetFlow:
    """One Ethernet representation of a message (or of a gateway pool)"""

    key: str
    mapping: MappingModel
    payload: int
    period: Optional[int]
    origin: str
    messages: list[str] = field(default_factory=list)
    branches: list[list[tuple[str, str]]] = field(default_factory=list)
    forwarding: dict[str, list[str]] = field(default_factory=dict)

    @property
    def first_hops(self) -> list[str]:
        hops: list[str] = []
        for branch in self.branches:
            if branch[0][1] not in hops:
                hops.append(branch[0][1])
        return hops

    @property
    def ports(self) -> list[tuple[str, str]]:
        seen: list[tuple[str, str]] = []
        for branch in self.branches:
            for hop in branch:
                if hop not in seen:
                    seen.append(hop)
        return seen

    @property
    def on_wire_len(self) -> int:
        return max(MIN_FRAME_BYTES, HEADER_BYTES + FCS_BYTES + self.payload)


@dataclass
class NetworkModel:
    name: str
    devices: dict[str, DeviceModel] = field(default_factory=dict)
    links: list[LinkModel] = field(default_factory=list)
    segments: dict[str, str] = field(default_factory=dict)
    messages: list[MessageModel] = field(default_factory=list)
    flows: dict[str, EthernetFlow] = field(default_factory=dict)
    metadata: dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    sim_time_limit: Optional[int] = None
    overrides: dict[str, str] = field(default_factory=dict, compare=False)
    warnings: list[Diagnostic] = field(default_factory=list, compare=False)
    schedules: dict[str, TtSchedule] = field(default_factory=dict, compare=False)

    def message(self, name: str) -> MessageModel:
        for message in self.messages:
            if message.name == name:
                return message
        raise KeyError(name)

    def link_between(self, a: str, b: str) -> LinkModel:
        for link in self.links:
            if {link.a, link.b} == {a, b}:
                return link
        raise KeyError(f"{a}<-->{b}")

    @property
    def buses(self) -> dict[str, DeviceModel]:
        return {name: device for name, device in self.devices.items() if device.kind == "canLink"}

    def bus_members(self, bus: str) -> list[str]:
        return [link.other(bus) for link in self.links if link.medium == CAN and bus in (link.a, link.b)]

    def ethernet_devices(self) -> list[str]:
        attached = {d for link in self.links if link.medium == ETHERNET for d in (link.a, link.b)}
        return [name for name in self.devices if name in attached]


# -- overrides ------------------------------------------------------------

def parse_override(name: str, text: str) -> int:
    """Convert one --override value; unknown names are a configuration error"""
    if name not in OVERRIDES:
        raise ValueError(f"unknown override '{name}' (known: {', '.join(sorted(OVERRIDES))})")
    try:
        quantity = parse_quantity(text.lstrip("+-"))
    except UnitError as exc:
        raise ValueError(f"override {name}: {exc}") from None
    expected = OVERRIDES[name]
    if quantity.kind not in (expected, "number"):
        raise ValueError(f"override {name} expects a {expected}, got '{text}'")
    if quantity.kind == "number" and expected in ("time", "rate"):
        raise ValueError(f"override {name} needs a unit, got '{text}'")
    return -quantity.value if text.startswith("-") else quantity.value


# -- validation -----------------------------------------------------------

class Validator:
    def __init__(self, ast: Ast, overrides: Optional[dict[str, str]] = None):
        self.ast = ast
        self.overrides = dict(overrides or {})
        self.diagnostics: list[Diagnostic] = []
        self.warnings: list[Diagnostic] = []
        self.types: dict[str, TypeDef] = {}
        self.adjacency: dict[str, list[LinkModel]] = {}

    def error(self, node, message: str) -> None:
        self.diagnostics.append(Diagnostic(line=node.line, column=getattr(node, "column", 1), message=message))

    def warn(self, node, message: str) -> None:
        self.warnings.append(Diagnostic(line=node.line, column=getattr(node, "column", 1), message=message,
                                       severity="warning"))

    # -- parameters -------------------------------------------------------

    def check_params(self, params: list[Param], allowed: dict[str, str], owner: str) -> dict[str, Value]:
        values: dict[str, Value] = {}
        for param in params:
            expected = allowed.get(param.name)
            if expected is None:
                self.warn(param, f"{owner}: parameter '{param.name}' is not supported and was ignored")
                continue
            value = param.value
            if value is None:
                if param.name == "police":
                    values[param.name] = Value(text="0ps", kind="time", number=0, line=param.line,
                                               column=param.column)
                else:
                    self.error(param, f"{owner}: parameter '{param.name}' needs a value")
                continue
            accepted = {expected, "number"} if expected == "size" else {expected}
            if value.kind not in accepted:
                self.error(value, f"{owner}: '{param.name}' expects a {expected}, got '{value.text}'")
                continue
            values[param.name] = value
        return values

    def resolve_type(self, ref: str, node, kind: str, seen: Optional[set] = None) -> list[Param]:
        """Parameters of a type, inherited ones first"""
        seen = seen or set()
        typedef = self.types.get(ref)
        if typedef is None:
            self.error(node, f"undefined type '{ref}'")
            return []
        if ref in seen:
            self.error(typedef, f"inheritance cycle through type '{ref}'")
            return []
        seen.add(ref)
        if typedef.kind != kind:
            self.error(node, f"type '{ref}' is a {typedef.kind}, expected {kind}")
        inherited = self.resolve_type(typedef.extends, typedef, kind, seen) if typedef.extends else []
        return [*inherited, *typedef.params]

    def body_params(self, body: Optional[Body], kind: str) -> list[Param]:
        if body is None:
            return []
        inherited = self.resolve_type(body.type_ref, body, kind) if body.type_ref else []
        return [*inherited, *body.params]

    # -- devices and topology ---------------------------------------------

    def build_types(self) -> None:
        for library in self.ast.types:
            for typedef in library.types:
                self.types[f"{library.name}.{typedef.name}"] = typedef
        short: dict[str, list[str]] = {}
        for qualified in list(self.types):
            short.setdefault(qualified.split(".", 1)[1], []).append(qualified)
        for name, qualified in short.items():
            if len(qualified) == 1 and name not in self.types:
                self.types[name] = self.types[qualified[0]]

    def build_device(self, decl) -> DeviceModel:
        allowed = DEVICE_PARAMS.get(decl.kind, {})
        values = self.check_params(self.body_params(decl.body, decl.kind), allowed, decl.name)
        device = DeviceModel(name=decl.name, kind=decl.kind, line=decl.line)
        if decl.kind == "canLink":
            device.bitrate = values["bitrate"].number if "bitrate" in values else settings.DEFAULT_CAN_BITRATE
            return device
        device.clock = ClockParams(
            drift_ppm=Fraction(values["drift"].number) if "drift" in values else Fraction(0),
            tick=values["tick"].number if "tick" in values else settings.CLOCK_TICK,
            sync_precision=values["syncPrecision"].number if "syncPrecision" in values else settings.SYNC_PRECISION,
            sync_interval=values["syncInterval"].number if "syncInterval" in values else settings.SYNC_INTERVAL,
        )
        if decl.kind == "switch":
            device.processing_delay = settings.SWITCH_PROCESSING_DELAY
        elif decl.kind == "gateway":
            device.processing_delay = settings.GATEWAY_PROCESSING_DELAY
        if "processingDelay" in values:
            device.processing_delay = values["processingDelay"].number
        if "queueCapacity" in values:
            device.queue_capacity = values["queueCapacity"].number
        if device.clock.tick < 1 or abs(device.clock.drift_ppm) >= 10**4:
            self.error(decl, f"{decl.name}: clock tick must be >= 1ps and |drift| < 10000ppm")
        if device.queue_capacity is not None and device.queue_capacity < 1:
            self.error(decl, f"{decl.name}: queueCapacity must be at least 1")
        return device

    def build_links(self, model: NetworkModel) -> None:
        pairs: set = set()
        for segment in self.ast.network.segments:
            media = set()
            for conn in segment.connections:
                missing = [name for name in (conn.left, conn.right) if name not in model.devices]
                for name in missing:
                    self.error(conn, f"connection names undefined device '{name}'")
                if missing:
                    continue
                if conn.left == conn.right:
                    self.error(conn, f"device '{conn.left}' connected to itself")
                    continue
                pair = frozenset((conn.left, conn.right))
                if pair in pairs:
                    self.error(conn, f"duplicate connection {conn.left} <--> {conn.right}")
                    continue
                pairs.add(pair)
                kinds = {model.devices[conn.left].kind, model.devices[conn.right].kind}
                if "canLink" in kinds:
                    if kinds == {"canLink"} or "switch" in kinds:
                        self.error(conn, "a CAN bus connects only to nodes and gateways")
                        continue
                    if conn.link is not None:
                        self.error(conn.link, "CAN attachments take no link parameters")
                    link = LinkModel(conn.left, conn.right, segment.name, CAN, line=conn.line)
                else:
                    values = self.check_params(self.body_params(conn.link, "ethernetLink"), LINK_PARAMS,
                                               f"{conn.left}<-->{conn.right}")
                    rate = values["bandwidth"].number if "bandwidth" in values else settings.DEFAULT_ETH_RATE
                    propagation = values["propagationDelay"].number if "propagationDelay" in values else 0
                    if rate <= 0:
                        self.error(conn, "link bandwidth must be positive")
                    link = LinkModel(conn.left, conn.right, segment.name, ETHERNET, rate, propagation, conn.line)
                media.add(link.medium)
                model.links.append(link)
                self.adjacency.setdefault(link.a, []).append(link)
                self.adjacency.setdefault(link.b, []).append(link)
            if len(media) > 1:
                self.error(segment, f"segment '{segment.name}' mixes CAN and Ethernet connections")
            if segment.name in model.segments:
                continue
            model.segments[segment.name] = media.pop() if len(media) == 1 else ETHERNET
        for bus in model.buses:
            segments = {link.segment for link in model.links if bus in (link.a, link.b)}
            if len(segments) > 1:
                self.error(model.devices[bus], f"bus '{bus}' is attached in several segments")

    # -- overrides --------------------------------------------------------

    def apply_overrides(self, model: NetworkModel) -> Optional[int]:
        """Apply device-level overrides; return the cross-traffic frame size if given"""
        parsed = {}
        for name, text in self.overrides.items():
            try:
                parsed[name] = parse_override(name, text)
            except ValueError as exc:
                self.diagnostics.append(Diagnostic(line=0, column=0, message=str(exc)))
        sign = 1
        for device in model.devices.values():
            if device.kind == "canLink":
                if "can_bitrate" in parsed:
                    device.bitrate = parsed["can_bitrate"]
                continue
            if "processing_delay" in parsed and device.kind == "switch":
                device.processing_delay = parsed["processing_delay"]
            if "sync_precision" in parsed:
                device.clock.sync_precision = parsed["sync_precision"]
            if "sync_interval" in parsed:
                device.clock.sync_interval = parsed["sync_interval"]
            if "tick_length" in parsed:
                device.clock.tick = parsed["tick_length"]
            if "drift_ppm" in parsed:
                # alternate sign in declaration order so neighbours drift apart
                device.clock.drift_ppm = Fraction(sign * parsed["drift_ppm"])
                sign = -sign
        if "seed" in parsed:
            model.seed = parsed["seed"]
            model.metadata["seed-set"] = str(parsed["seed"])
        if "sim_time_limit" in parsed:
            model.sim_time_limit = parsed["sim_time_limit"]
            model.metadata["sim-time-limit"] = self.overrides["sim_time_limit"]
        return parsed.get("cross_traffic_frame_size")

    def read_metadata(self, model: NetworkModel) -> None:
        network = self.ast.network
        model.metadata = dict(network.inline)
        if "seed-set" in model.metadata:
            try:
                model.seed = int(model.metadata["seed-set"])
            except ValueError:
                self.error(network, f"inline ini seed-set '{model.metadata['seed-set']}' is not an integer")
        if "sim-time-limit" in model.metadata:
            try:
                model.sim_time_limit = parse_quantity(model.metadata["sim-time-limit"]).value
            except UnitError as exc:
                self.error(network, f"inline ini sim-time-limit: {exc}")

    # -- messages ---------------------------------------------------------

    def build_mapping(self, entry: MappingEntry, message: MessageModel, model: NetworkModel) -> None:
        values = self.check_params(entry.params, MAPPING_PARAMS.get(entry.kind, {}), f"{message.name}.{entry.target}")
        if entry.kind == "pool":
            device = model.devices.get(entry.target)
            if device is None or device.kind != "gateway":
                self.error(entry, f"pool mapping target '{entry.target}' is not a gateway")
                return
            if "holdUp" not in values:
                self.error(entry, f"pool {entry.pool} of message {message.name} needs a holdUp")
                return
            message.pools[entry.target] = PoolMapping(entry.target, entry.pool, values["holdUp"].number, entry.line)
            return
        medium = model.segments.get(entry.target)
        if medium is None:
            self.error(entry, f"mapping names unknown segment '{entry.target}'")
            return
        if entry.target in message.mappings:
            self.error(entry, f"segment '{entry.target}' mapped twice")
            return
        if (medium == CAN) != (entry.kind == CAN):
            self.error(entry, f"'{entry.kind}' mapping does not fit {medium} segment '{entry.target}'")
            return
        mapping = MappingModel(segment=entry.target, kind=entry.kind, line=entry.line)
        if entry.kind == "can":
            if "id" not in values:
                self.error(entry, "can mapping needs an id")
                return
            mapping.can_id = values["id"].number
            if not 0 <= mapping.can_id <= MAX_CAN_ID:
                self.error(entry, f"CAN id {mapping.can_id} is not an 11-bit identifier")
            if message.payload > MAX_DLC:
                self.error(entry, f"CAN mapping of '{message.name}' carries {message.payload}B, "
                                  f"more than {MAX_DLC}B")
        else:
            if message.payload > MAX_PAYLOAD_BYTES:
                self.error(entry, f"Ethernet mapping of '{message.name}' carries {message.payload}B, "
                                  f"more than {MAX_PAYLOAD_BYTES}B")
        if entry.kind == "tt":
            if "ctID" not in values:
                self.error(entry, "tt mapping needs a ctID")
                return
            mapping.ct_id = values["ctID"].number
            mapping.priority = 7
            if message.period is None:
                self.error(entry, f"time-triggered message '{message.name}' needs a period")
        elif entry.kind == "rc":
            mapping.vl_id = values["vlID"].number if "vlID" in values else len(model.messages)
            mapping.priority = values["priority"].number if "priority" in values else 7
            mapping.bag = values["bag"].number if "bag" in values else message.period
            if "police" in values:
                mapping.police = values["police"].number
            if mapping.bag is None or mapping.bag <= 0:
                self.error(entry, f"rc mapping of '{message.name}' needs a bag or a message period")
        elif entry.kind == "avb":
            mapping.stream_id = values["streamID"].number if "streamID" in values else len(model.messages)
            mapping.sr_class = values["srClass"].text if "srClass" in values else "A"
            mapping.priority = 3 if mapping.sr_class == "A" else 2
            if mapping.sr_class not in ("A", "B"):
                self.error(entry, f"SR class must be A or B, got '{mapping.sr_class}'")
            if "idleSlope" in values:
                mapping.idle_slope = values["idleSlope"].number
                if mapping.idle_slope <= 0:
                    self.error(entry, "idleSlope must be positive")
        elif entry.kind == "be":
            mapping.priority = values["priority"].number if "priority" in values else 0
        if not 0 <= mapping.priority <= 7:
            self.error(entry, "priority must lie in 0..7")
        message.mappings[entry.target] = mapping

    def build_message(self, decl: Message, model: NetworkModel) -> Optional[MessageModel]:
        values = self.check_params(decl.params, MESSAGE_PARAMS, decl.name)
        ok = True
        if decl.sender is None:
            self.error(decl, f"message '{decl.name}' has no sender")
            ok = False
        if not decl.receivers:
            self.error(decl, f"message '{decl.name}' has no receivers")
            ok = False
        for name in filter(None, [decl.sender, *decl.receivers]):
            device = model.devices.get(name)
            if device is None:
                self.error(decl, f"message '{decl.name}' names undefined device '{name}'")
                ok = False
            elif device.kind not in ENDPOINT_KINDS:
                self.error(decl, f"'{name}' is a {device.kind} and cannot send or receive messages")
                ok = False
        if "payload" not in values:
            self.error(decl, f"message '{decl.name}' needs a payload")
            ok = False
        if not ok:
            return None
        message = MessageModel(
            name=decl.name,
            sender=decl.sender,
            receivers=list(dict.fromkeys(decl.receivers)),
            payload=values["payload"].number,
            period=values["period"].number if "period" in values else None,
            offset=values["offset"].number if "offset" in values else 0,
            burst=values["burst"].number if "burst" in values else 1,
            line=decl.line,
        )
        if message.payload < 0:
            self.error(decl, "payload cannot be negative")
        if message.period is not None and message.period <= 0:
            self.error(decl, "period must be positive")
        if message.burst < 1:
            self.error(decl, "burst must be at least 1")
        if message.offset < 0:
            self.error(decl, "offset cannot be negative")
        for entry in decl.mapping:
            self.build_mapping(entry, message, model)
        # a TT slot holds one frame per period; pools at a gateway may merge a burst
        if message.burst > 1 and not message.pools and any(m.kind == "tt" for m in message.mappings.values()):
            self.error(decl, f"time-triggered message '{message.name}' sends one frame per period, "
                             f"not a burst of {message.burst}")
        return message

    def is_cross_traffic(self, message: MessageModel, model: NetworkModel) -> bool:
        ethernet = [m for m in message.mappings.values() if model.segments[m.segment] == ETHERNET]
        return bool(ethernet) and all(m.kind == "be" for m in ethernet)

    # -- routing ----------------------------------------------------------

    def find_route(self, model: NetworkModel, sender: str, receiver: str) -> Optional[list[str]]:
        """Breadth-first search in declaration order; only forwarding devices relay"""
        parents = {sender: None}
        frontier = deque([sender])
        while frontier:
            current = frontier.popleft()
            if current == receiver:
                break
            if current != sender and model.devices[current].kind not in FORWARDING_KINDS:
                continue
            for link in self.adjacency.get(current, []):
                nxt = link.other(current)
                if nxt not in parents:
                    parents[nxt] = current
                    frontier.append(nxt)
        if receiver not in parents:
            return None
        path = [receiver]
        while parents[path[-1]] is not None:
            path.append(parents[path[-1]])
        return path[::-1]

    def check_route(self, message: MessageModel, path: list[str], model: NetworkModel, decl) -> bool:
        ok = True
        for a, b in zip(path, path[1:]):
            link = model.link_between(a, b)
            if link.segment not in message.mappings:
                self.error(decl, f"message '{message.name}' crosses segment '{link.segment}' without a mapping")
                ok = False
        for index in range(1, len(path) - 1):
            device = model.devices[path[index]]
            if device.kind != "gateway":
                continue
            before = model.link_between(path[index - 1], device.name).medium
            after = model.link_between(device.name, path[index + 1]).medium
            if before == ETHERNET and after == ETHERNET:
                self.error(decl, f"gateway '{device.name}' cannot bridge Ethernet to Ethernet "
                                 f"for '{message.name}' (unsupported)")
                ok = False
            pool = message.pools.get(device.name)
            if pool is not None and not (before == CAN and after == ETHERNET):
                self.error(decl, f"pool {pool.pool} at '{device.name}' needs a CAN-to-Ethernet crossing")
                ok = False
        return ok

    def route_messages(self, model: NetworkModel, decls: dict[str, Message]) -> None:
        for message in model.messages:
            decl = decls[message.name]
            for receiver in message.receivers:
                if receiver == message.sender:
                    self.error(decl, f"message '{message.name}' is sent to its own sender")
                    continue
                path = self.find_route(model, message.sender, receiver)
                if path is None:
                    self.error(decl, f"receiver '{receiver}' is unreachable from '{message.sender}'")
                    continue
                if self.check_route(message, path, model, decl):
                    message.routes[receiver] = path
            for gateway, pool in message.pools.items():
                if not any(gateway in path[1:-1] for path in message.routes.values()):
                    self.warn(pool, f"pool {pool.pool} at '{gateway}' is not on any route of '{message.name}'")
            message.traffic_class = self.traffic_class(message, model)

    def traffic_class(self, message: MessageModel, model: NetworkModel) -> str:
        for path in message.routes.values():
            for a, b in zip(path, path[1:]):
                link = model.link_between(a, b)
                if link.medium == ETHERNET:
                    return message.mappings[link.segment].kind.upper()
        return "CAN"

    # -- Ethernet flows ---------------------------------------------------

    def ethernet_runs(self, path: list[str], model: NetworkModel) -> list[list[str]]:
        runs: list[list[str]] = []
        current: list[str] = []
        for a, b in zip(path, path[1:]):
            if model.link_between(a, b).medium == ETHERNET:
                if not current:
                    current = [a]
                current.append(b)
            elif current:
                runs.append(current)
                current = []
        if current:
            runs.append(current)
        return runs

    def build_flows(self, model: NetworkModel, decls: dict[str, Message]) -> None:
        pool_members: dict[str, list[MessageModel]] = {}
        for message in model.messages:
            decl = decls[message.name]
            for path in message.routes.values():
                for run in self.ethernet_runs(path, model):
                    origin = run[0]
                    mappings = {message.mappings[model.link_between(a, b).segment].class_tag()
                                for a, b in zip(run, run[1:])}
                    if len(mappings) > 1:
                        self.error(decl, f"message '{message.name}' changes Ethernet traffic class without "
                                         f"a gateway (unsupported)")
                        continue
                    mapping = message.mappings[model.link_between(run[0], run[1]).segment]
                    pool = message.pools.get(origin) if origin != message.sender else None
                    if pool is not None:
                        key = f"pool:{origin}.{pool.pool}"
                        members = pool_members.setdefault(key, [])
                        if message not in members:
                            members.append(message)
                    else:
                        key = message.name
                    payload = message.payload if origin == message.sender else encapsulated_size([message.payload])
                    flow = model.flows.get(key)
                    if flow is None:
                        flow = model.flows[key] = EthernetFlow(key, mapping, payload, message.period, origin)
                    elif flow.mapping.class_tag() != mapping.class_tag():
                        self.error(decl, f"members of {key} must share one Ethernet mapping")
                        continue
                    if message.name not in flow.messages:
                        flow.messages.append(message.name)
                    branch = list(zip(run, run[1:]))
                    if pool is not None and flow.messages[0] != message.name and branch not in flow.branches:
                        self.error(pool, f"members of {key} must share one Ethernet route")
                        continue
                    if branch not in flow.branches:
                        flow.branches.append(branch)
                    for node, peer in branch[1:]:
                        hops = flow.forwarding.setdefault(node, [])
                        if peer not in hops:
                            hops.append(peer)
        for key, members in pool_members.items():
            self.check_pool(model.flows[key], members)
        self.check_tt_ids(model)
        self.check_avb_reservations(model)

    def check_pool(self, flow: EthernetFlow, members: list[MessageModel]) -> None:
        """Reject pools whose worst-case flush cannot fit one Ethernet frame"""
        gateway = flow.origin
        holdup = max(m.pools[gateway].holdup for m in members)
        frames = 0
        dlcs: list[int] = []
        for message in members:
            releases = holdup // message.period + 1 if message.period else 1
            frames += releases * message.burst
            dlcs += [message.payload] * (releases * message.burst)
        size = encapsulated_size(dlcs)
        limit = min(settings.POOL_MAX_PAYLOAD, MAX_PAYLOAD_BYTES)
        if frames > MAX_POOLED_FRAMES or size > limit:
            first = members[0].pools[gateway]
            self.error(first, f"{flow.key} may accumulate {frames} frames ({size}B) within holdUp, "
                              f"more than one {limit}B Ethernet payload")
        flow.payload = size
        periods = [m.period for m in members if m.period]
        flow.period = min(periods) if periods else None

    def check_avb_reservations(self, model: NetworkModel) -> None:
        """Per egress port, the AVB classes together must reserve less than the link rate"""
        by_port: dict[tuple[str, str], list[EthernetFlow]] = {}
        for flow in model.flows.values():
            if flow.mapping.kind == "avb":
                for port in flow.ports:
                    by_port.setdefault(port, []).append(flow)
        for (node, peer), flows in by_port.items():
            rate = model.link_between(node, peer).rate
            reserved = 0
            for sr_class in ("A", "B"):
                members = [flow for flow in flows if flow.mapping.sr_class == sr_class]
                explicit = [flow.mapping.idle_slope for flow in members if flow.mapping.idle_slope]
                if explicit:
                    reserved += sum(explicit)
                elif members:
                    fraction = settings.AVB_CLASS_A_FRACTION if sr_class == "A" else settings.AVB_CLASS_B_FRACTION
                    reserved += int(rate * fraction)
            if reserved >= rate:
                streams = ", ".join(flow.key for flow in flows)
                self.error(flows[-1].mapping, f"AVB reservations on {node}->{peer} ({streams}) add up to "
                                              f"{format_rate(reserved)}, not below the link rate {format_rate(rate)}")

    def check_tt_ids(self, model: NetworkModel) -> None:
        owners: dict[int, str] = {}
        for flow in model.flows.values():
            if flow.mapping.kind != "tt":
                continue
            owner = owners.setdefault(flow.mapping.ct_id, flow.key)
            if owner != flow.key:
                self.error(flow.mapping, f"ctID {flow.mapping.ct_id} used by both {owner} and {flow.key}")

    # -- entry point ------------------------------------------------------

    def run(self) -> NetworkModel:
        network = self.ast.network
        if network is None:
            raise AndlError([Diagnostic(line=1, column=1, message="document declares no network")])
        self.build_types()
        model = NetworkModel(name=network.name)
        for decl in network.devices:
            if decl.name not in model.devices:
                model.devices[decl.name] = self.build_device(decl)
        self.build_links(model)
        self.read_metadata(model)
        cross_traffic = self.apply_overrides(model)
        decls = {decl.name: decl for decl in network.messages}
        for decl in network.messages:
            message = self.build_message(decl, model)
            if message is None:
                continue
            if cross_traffic is not None and self.is_cross_traffic(message, model):
                if cross_traffic == 0:
                    continue
                message.payload = min(max(cross_traffic - HEADER_BYTES - FCS_BYTES, 0), MAX_PAYLOAD_BYTES)
            model.messages.append(message)
        self.route_messages(model, decls)
        self.build_flows(model, decls)
        model.overrides = dict(self.overrides)
        model.warnings = self.warnings
        if self.diagnostics:
            raise AndlError(sorted(self.diagnostics, key=lambda d: (d.line, d.column)))
        for warning in self.warnings:
            logger.warning(f"{network.name}: {warning}")
        return model


def validate(ast: Ast, overrides: Optional[dict[str, str]] = None) -> NetworkModel:
    """Resolve references and check every model invariant; raise AndlError on failure"""
    return Validator(ast, overrides).run()
