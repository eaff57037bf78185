import pytest

from app.andl.units import (
    UnitError,
    format_rate,
    format_time,
    parse_quantity,
    parse_rate,
    parse_size,
    parse_time,
)


@pytest.mark.parametrize("text, value", [
    ("5ms", 5 * 10**9),
    ("1.5us", 1_500_000),
    ("8ns", 8000),
    ("2s", 2 * 10**12),
    ("0ps", 0),
])
def test_times_become_picoseconds(text, value):
    assert parse_time(text) == value


def test_sizes_and_rates():
    assert parse_size("1518B") == 1518
    assert parse_size("2KB") == 2000
    assert parse_rate("100Mb/s") == 100_000_000
    assert parse_rate("500kb/s") == 500_000
    assert parse_quantity("37").kind == "number"


@pytest.mark.parametrize("text", ["0.5ps", "1.5", "3parsecs", "ms", "5 ms x"])
def test_inexact_or_unknown_literals_are_rejected(text):
    with pytest.raises(UnitError):
        parse_quantity(text)


def test_kind_mismatch():
    with pytest.raises(UnitError):
        parse_time("100B")


@pytest.mark.parametrize("ps, text", [(0, "0ps"), (5 * 10**9, "5ms"), (1_500_000, "1500ns"), (7, "7ps")])
def test_format_time_picks_the_largest_exact_unit(ps, text):
    assert format_time(ps) == text
    assert parse_time(text) == ps


def test_format_rate():
    assert format_rate(100_000_000) == "100Mb/s"
