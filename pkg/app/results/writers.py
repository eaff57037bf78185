"""
Result managers: CSV and JSON statistics, violation reports and pcap traces.

Output files carry no wall-clock data, so identical runs produce
byte-identical files.
"""
import csv
import hashlib
import io
import logging
from pathlib import Path
from typing import Optional

from app.models.schemas import BufferRow, StatsDocument, StreamRow, ViolationRow
from app.results.constraints import Violation
from app.results.pcap import write_pcap
from app.results.stats import StatsCollector
from app.sim.events import TieClass

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["stream", "class", "count", "min_ps", "max_ps", "mean_ps", "jitter_ps", "drops"]


def config_digest(scenario_text: str, overrides: Optional[dict[str, str]] = None, seed: Optional[int] = None) -> str:
    digest = hashlib.sha256(scenario_text.encode("utf-8"))
    for key in sorted(overrides or {}):
        digest.update(f"\n{key}={overrides[key]}".encode("utf-8"))
    if seed is not None:
        digest.update(f"\nseed={seed}".encode("utf-8"))
    return digest.hexdigest()


def stream_rows(collector: StatsCollector) -> list[StreamRow]:
    rows = []
    for key in sorted(collector.streams):
        stats = collector.streams[key]
        mean = stats.mean
        rows.append(StreamRow(
            stream=key,
            traffic_class=stats.traffic_class,
            count=stats.count,
            min_ps=stats.min,
            max_ps=stats.max,
            mean_ps=mean.numerator // mean.denominator if mean is not None else None,
            jitter_ps=stats.jitter,
            drops=stats.drop_count,
            drop_reasons=dict(sorted(stats.drops.items())),
            hop_sums_ps=dict(stats.hop_sums),
        ))
    return rows


def buffer_rows(collector: StatsCollector) -> list[BufferRow]:
    return [
        BufferRow(node=mark.node, port=mark.port, traffic_class=mark.traffic_class,
                  max_frames=mark.max_frames, max_bytes=mark.max_bytes, drops=mark.drops)
        for _, mark in sorted(collector.buffers.items())
    ]


def violation_rows(violations: list[Violation]) -> list[ViolationRow]:
    return [
        ViolationRow(rule=v.rule, bound=v.bound, limit=str(v.limit), module=v.module, metric=v.metric,
                     value=str(v.value), time_ps=v.time, action=v.action)
        for v in violations
    ]


def _blank(value) -> str:
    return "" if value is None else str(value)


def stats_csv(collector: StatsCollector) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in stream_rows(collector):
        writer.writerow([row.stream, row.traffic_class, row.count, _blank(row.min_ps), _blank(row.max_ps),
                         _blank(row.mean_ps), row.jitter_ps, row.drops])
    # watermark rows: count holds the frame watermark
    for row in buffer_rows(collector):
        writer.writerow([f"{row.port}:{row.traffic_class}", f"buffer:{row.traffic_class}", row.max_frames,
                         "", "", "", "", row.drops])
    return buffer.getvalue()


def stats_document(collector: StatsCollector, digest: str, metadata: Optional[dict] = None) -> StatsDocument:
    meta = {"tie_order": ",".join(tie.name for tie in TieClass)}
    meta.update({key: str(value) for key, value in sorted((metadata or {}).items())})
    return StatsDocument(streams=stream_rows(collector), buffers=buffer_rows(collector), config_digest=digest,
                         metadata=meta)


def write_stats(collector: StatsCollector, fmt: str, path, digest: str = "",
                metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        text = stats_csv(collector)
    elif fmt == "json":
        text = stats_document(collector, digest, metadata).model_dump_json(indent=2) + "\n"
    else:
        raise ValueError(f"unknown stats format '{fmt}'")
    path.write_text(text, encoding="utf-8", newline="")
    logger.info(f"Wrote {fmt} statistics to {path}")
    return path


def write_violations(violations: list[Violation], path, stop_reason: Optional[str] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [violation.describe() for violation in violations]
    if stop_reason:
        lines.append(f"stopped: {stop_reason}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    return path


def write_trace(trace: list[tuple[int, bytes]], path) -> Path:
    path = write_pcap(trace, path)
    logger.info(f"Wrote {len(trace)} frames to {path}")
    return path
