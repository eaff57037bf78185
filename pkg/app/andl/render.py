"""Canonical ANDL text for a validated model"""
from app.andl.units import format_rate, format_size, format_time
from app.andl.validator import CAN, MappingModel, MessageModel, NetworkModel

INDENT = "  "


def _device_body(model: NetworkModel, name: str) -> str:
    device = model.devices[name]
    if device.kind == "canLink":
        return f"{{ bitrate {format_rate(device.bitrate)}; }}"
    clock = device.clock
    params = [
        f"drift {clock.drift_ppm.numerator};",
        f"tick {format_time(clock.tick)};",
        f"syncPrecision {format_time(clock.sync_precision)};",
        f"syncInterval {format_time(clock.sync_interval)};",
    ]
    if device.kind in ("switch", "gateway"):
        params.append(f"processingDelay {format_time(device.processing_delay)};")
    if device.queue_capacity is not None:
        params.append(f"queueCapacity {device.queue_capacity};")
    return "{ " + " ".join(params) + " }"


def _mapping(mapping: MappingModel) -> str:
    if mapping.kind == "can":
        params = [f"id {mapping.can_id};"]
    elif mapping.kind == "tt":
        params = [f"ctID {mapping.ct_id};"]
    elif mapping.kind == "rc":
        params = [f"vlID {mapping.vl_id};", f"bag {format_time(mapping.bag)};", f"priority {mapping.priority};"]
        if mapping.police is not None:
            params.append(f"police {format_time(mapping.police)};")
    elif mapping.kind == "avb":
        params = [f"streamID {mapping.stream_id};", f"srClass {mapping.sr_class};"]
        if mapping.idle_slope is not None:
            params.append(f"idleSlope {format_rate(mapping.idle_slope)};")
    else:
        params = [f"priority {mapping.priority};"]
    return f"{mapping.segment}: {mapping.kind}{{{' '.join(params)}}};"


def _message(message: MessageModel, depth: int) -> list[str]:
    pad = INDENT * depth
    lines = [
        f"{pad}message {message.name} {{",
        f"{pad}{INDENT}sender {message.sender};",
        f"{pad}{INDENT}receivers {', '.join(message.receivers)};",
        f"{pad}{INDENT}payload {format_size(message.payload)};",
    ]
    if message.period is not None:
        lines.append(f"{pad}{INDENT}period {format_time(message.period)};")
    lines.append(f"{pad}{INDENT}offset {format_time(message.offset)};")
    lines.append(f"{pad}{INDENT}burst {message.burst};")
    lines.append(f"{pad}{INDENT}mapping {{")
    for mapping in message.mappings.values():
        lines.append(f"{pad}{INDENT * 2}{_mapping(mapping)}")
    for pool in message.pools.values():
        lines.append(f"{pad}{INDENT * 2}{pool.gateway}: pool {pool.pool}{{holdUp {format_time(pool.holdup)};}};")
    lines.append(f"{pad}{INDENT}}}")
    lines.append(f"{pad}}}")
    return lines


def render(model: NetworkModel) -> str:
    """Pretty-print a model so that parsing and validating the text yields an equal model"""
    lines = [f"network {model.name} {{"]
    if model.metadata:
        lines.append(f"{INDENT}inline ini {{")
        lines.extend(f"{INDENT * 2}{key} = {value}" for key, value in model.metadata.items())
        lines.append(f"{INDENT}}}")

    lines.append(f"{INDENT}devices {{")
    for name, device in model.devices.items():
        lines.append(f"{INDENT * 2}{device.kind} {name} {_device_body(model, name)}")
    lines.append(f"{INDENT}}}")

    lines.append(f"{INDENT}connections {{")
    for segment in model.segments:
        lines.append(f"{INDENT * 2}segment {segment} {{")
        for link in model.links:
            if link.segment != segment:
                continue
            if link.medium == CAN:
                lines.append(f"{INDENT * 3}{link.a} <--> {link.b};")
            else:
                body = f"{{bandwidth {format_rate(link.rate)}; propagationDelay {format_time(link.propagation)};}}"
                lines.append(f"{INDENT * 3}{link.a} <--> {body} <--> {link.b};")
        lines.append(f"{INDENT * 2}}}")
    lines.append(f"{INDENT}}}")

    lines.append(f"{INDENT}communication {{")
    for message in model.messages:
        lines.extend(_message(message, 2))
    lines.append(f"{INDENT}}}")
    lines.append("}")
    return "\n".join(lines) + "\n"
