"""
Inaccurate local oscillators with periodic synchronization.

A LocalClock maps global simulation time to the node's local time using a
constant drift and the offset left behind by the last synchronization.
The protocol that produces the offset is abstracted. sync_precision is the
largest difference between any two synchronized clocks, so each sync draws
the offset uniformly from [-sync_precision//2, +sync_precision//2] and two
clocks never disagree by more than sync_precision right after a sync.
"""
import math
import random
from dataclasses import dataclass
from fractions import Fraction

MAX_DRIFT_PPM = 10**4


@dataclass(frozen=True)
class Oscillator:
    drift_ppm: Fraction = Fraction(0)
    tick_length: int = 1

    def __post_init__(self):
        object.__setattr__(self, "drift_ppm", Fraction(self.drift_ppm))
        if abs(self.drift_ppm) >= MAX_DRIFT_PPM:
            raise ValueError(f"drift {self.drift_ppm}ppm outside ±{MAX_DRIFT_PPM}ppm")
        if self.tick_length < 1:
            raise ValueError("tick_length must be at least 1ps")

    @property
    def rate(self) -> Fraction:
        """Local seconds per global second"""
        return 1 + self.drift_ppm / 10**6


class LocalClock:
    def __init__(self, oscillator: Oscillator = Oscillator(), sync_interval: int = 0,
                 sync_precision: int = 0, offset: int = 0):
        if sync_precision < 0:
            raise ValueError("sync_precision cannot be negative")
        if sync_interval < 0:
            raise ValueError("sync_interval cannot be negative")
        self.oscillator = oscillator
        self.sync_interval = sync_interval
        self.sync_precision = sync_precision
        self.offset = offset
        self.last_sync_global = 0
        self.last_sync_local = offset

    @property
    def tick_length(self) -> int:
        return self.oscillator.tick_length

    @property
    def is_perfect(self) -> bool:
        return self.oscillator.drift_ppm == 0 and self.sync_precision == 0 and self.offset == 0

    def _exact_local(self, t_global: int) -> Fraction:
        elapsed = t_global - self.last_sync_global
        return self.last_sync_local + elapsed * self.oscillator.rate

    def global_to_local(self, t_global: int) -> int:
        """Local time at t_global, truncated to the oscillator tick"""
        tick = self.oscillator.tick_length
        return math.floor(self._exact_local(t_global) / tick) * tick

    def global_to_local_exact(self, t_global: int) -> int:
        """Local time at t_global at picosecond resolution (no tick truncation)"""
        return math.floor(self._exact_local(t_global))

    def local_to_global(self, t_local: int) -> int:
        """Earliest global time at which the (ticked) local clock reads t_local or later"""
        tick = self.oscillator.tick_length
        target = -(-t_local // tick) * tick
        needed = target - self.last_sync_local
        if needed <= 0:
            return self.last_sync_global
        return self.last_sync_global + math.ceil(Fraction(needed) / self.oscillator.rate)

    def apply_sync(self, t_global: int, rng: random.Random) -> "LocalClock":
        """Re-anchor the clock at t_global with a fresh offset within half the precision"""
        half = self.sync_precision // 2
        if half:
            self.offset = rng.randint(-half, half)
        else:
            self.offset = 0
        self.last_sync_global = t_global
        self.last_sync_local = t_global + self.offset
        return self

    def max_error(self) -> int:
        """Upper bound on |local - global| between two syncs, tick truncation included"""
        drift = abs(self.oscillator.drift_ppm) * self.sync_interval / 10**6
        return self.sync_precision + math.ceil(drift) + self.oscillator.tick_length
