"""
Latency/jitter accumulators and queue watermarks.

All latencies are integer picoseconds; the mean is kept as an exact
Fraction so that mean * count == sum holds for every stream.
"""
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from app.sim.errors import IncompleteTrail


@dataclass
class BufferWatermark:
    node: str
    port: str
    traffic_class: str
    max_frames: int = 0
    max_bytes: int = 0
    drops: int = 0

    @property
    def key(self) -> str:
        return f"{self.port}:{self.traffic_class}"

    def observe(self, frames: int, nbytes: int) -> None:
        if frames > self.max_frames:
            self.max_frames = frames
        if nbytes > self.max_bytes:
            self.max_bytes = nbytes


@dataclass
class StreamStats:
    key: str
    traffic_class: str
    window: int = 100
    count: int = 0
    min: Optional[int] = None
    max: Optional[int] = None
    total: int = 0
    recent: deque = field(default_factory=deque)
    hop_sums: dict[str, int] = field(default_factory=dict)
    drops: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.recent = deque(self.recent, maxlen=self.window)

    @property
    def mean(self) -> Optional[Fraction]:
        return Fraction(self.total, self.count) if self.count else None

    @property
    def jitter(self) -> int:
        if self.count == 0:
            return 0
        return self.max - self.min

    @property
    def recent_mean(self) -> Optional[Fraction]:
        return Fraction(sum(self.recent), len(self.recent)) if self.recent else None

    @property
    def drop_count(self) -> int:
        return sum(self.drops.values())

    def add(self, latency: int) -> None:
        self.count += 1
        self.total += latency
        self.min = latency if self.min is None else min(self.min, latency)
        self.max = latency if self.max is None else max(self.max, latency)
        self.recent.append(latency)


class StatsCollector:
    """Per-run owner of stream statistics and buffer watermarks"""

    def __init__(self, window: int = 100):
        self.window = window
        self.streams: dict[str, StreamStats] = {}
        self.buffers: dict[tuple[str, str, str], BufferWatermark] = {}

    def stream(self, key: str, traffic_class: str) -> StreamStats:
        stats = self.streams.get(key)
        if stats is None:
            stats = self.streams[key] = StreamStats(key, traffic_class, self.window)
        return stats

    def buffer(self, node: str, port: str, traffic_class: str) -> BufferWatermark:
        mark = self.buffers.get((node, port, traffic_class))
        if mark is None:
            mark = self.buffers[(node, port, traffic_class)] = BufferWatermark(node, port, traffic_class)
        return mark

    def record_latency(self, key: str, frame, traffic_class: str = "") -> StreamStats:
        """Account the end-to-end latency of a frame that reached its receiver"""
        trail = frame.hop_trail
        if len(trail) < 2 or trail[-1].arrival is None:
            raise IncompleteTrail(f"stream {key}: hop trail {trail!r} does not reach a receiver")
        latency = trail[-1].arrival - frame.created_at
        if latency < 0:
            raise IncompleteTrail(f"stream {key}: arrival precedes creation")
        stats = self.stream(key, traffic_class)
        stats.add(latency)
        for hop in trail[:-1]:
            if hop.departure is not None:
                stats.hop_sums[hop.node] = stats.hop_sums.get(hop.node, 0) + hop.departure - hop.arrival
        return stats

    def count_drop(self, key: str, reason: str, traffic_class: str = "") -> None:
        stats = self.stream(key, traffic_class)
        stats.drops[reason] = stats.drops.get(reason, 0) + 1
