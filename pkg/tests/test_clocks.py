import random
from fractions import Fraction

import pytest

from app.sim.clocks import LocalClock, Oscillator


def test_perfect_clock_is_the_identity():
    clock = LocalClock()
    assert clock.is_perfect
    for t in (0, 1, 999, 10**12):
        assert clock.global_to_local(t) == t
        assert clock.local_to_global(t) == t


def test_local_time_is_truncated_to_the_tick():
    clock = LocalClock(Oscillator(tick_length=80_000))
    assert clock.global_to_local(79_999) == 0
    assert clock.global_to_local(80_000) == 80_000
    assert clock.global_to_local(250_000) == 240_000
    assert clock.global_to_local_exact(250_000) == 250_000


def test_drift_stretches_local_time():
    clock = LocalClock(Oscillator(drift_ppm=Fraction(100)))
    # +100ppm: one global millisecond reads 1ms + 100ns locally
    assert clock.global_to_local(10**9) == 10**9 + 100_000
    clock = LocalClock(Oscillator(drift_ppm=Fraction(-100)))
    assert clock.global_to_local(10**9) == 10**9 - 100_000


def test_local_to_global_finds_the_earliest_reading():
    clock = LocalClock(Oscillator(drift_ppm=Fraction(37), tick_length=80_000), offset=123_456)
    for target in (0, 80_000, 10**6, 7 * 10**9 + 160_000):
        t = clock.local_to_global(target)
        assert clock.global_to_local(t) >= target
        if t > clock.last_sync_global:
            assert clock.global_to_local(t - 1) < target


def test_sync_offset_stays_within_precision():
    rng = random.Random(3)
    clock = LocalClock(Oscillator(tick_length=80_000), sync_interval=10**9, sync_precision=500_000)
    for k in range(200):
        now = k * 10**9
        clock.apply_sync(now, rng)
        assert -500_000 <= clock.offset <= 500_000
        assert clock.last_sync_global == now
        assert abs(clock.global_to_local_exact(now) - now) <= 500_000


def test_two_clocks_synced_together_stay_within_precision():
    rng = random.Random(7)
    a = LocalClock(Oscillator(tick_length=80_000), sync_interval=10**9, sync_precision=500_000)
    b = LocalClock(Oscillator(tick_length=80_000), sync_interval=10**9, sync_precision=500_000)
    spread = []
    for k in range(500):
        now = k * 10**9
        a.apply_sync(now, rng)
        b.apply_sync(now, rng)
        assert abs(a.offset) <= 250_000 and abs(b.offset) <= 250_000
        spread.append(a.offset - b.offset)
    assert max(spread) - min(spread) <= 2 * 500_000
    assert max(abs(s) for s in spread) <= 500_000
    # the draw covers the allowed range, not just a corner of it
    assert max(spread) > 250_000 and min(spread) < -250_000


def test_error_between_syncs_respects_max_error():
    rng = random.Random(11)
    clock = LocalClock(Oscillator(drift_ppm=Fraction(-100), tick_length=80_000), sync_interval=10**9,
                       sync_precision=500_000)
    bound = clock.max_error()
    assert bound == 500_000 + 100_000 + 80_000
    for k in range(50):
        clock.apply_sync(k * 10**9, rng)
        for step in range(0, 10**9, 10**8 - 1):
            t = k * 10**9 + step
            assert abs(clock.global_to_local(t) - t) <= bound


def test_zero_precision_sync_keeps_the_clock_exact():
    clock = LocalClock(sync_interval=10**9, sync_precision=0)
    clock.apply_sync(5 * 10**9, random.Random(1))
    assert clock.offset == 0
    assert clock.global_to_local(6 * 10**9) == 6 * 10**9


@pytest.mark.parametrize("drift, tick", [(Fraction(10**4), 1), (Fraction(-10**4), 1), (Fraction(0), 0)])
def test_oscillator_rejects_out_of_range_parameters(drift, tick):
    with pytest.raises(ValueError):
        Oscillator(drift, tick)


def test_negative_precision_is_rejected():
    with pytest.raises(ValueError):
        LocalClock(sync_precision=-1)
