"""
Unit literals shared by the ANDL parser, the settings layer and the CLI.

Every quantity is converted to an exact integer in its base unit:
picoseconds for time, bytes for sizes and bits per second for rates.
"""
import re
from dataclasses import dataclass
from fractions import Fraction

TIME_UNITS = {"ps": 1, "ns": 10**3, "us": 10**6, "ms": 10**9, "s": 10**12}
SIZE_UNITS = {"B": 1, "KB": 1000}
RATE_UNITS = {"b/s": 1, "kb/s": 10**3, "Mb/s": 10**6, "Gb/s": 10**9}

UNIT_KINDS = {
    **{unit: "time" for unit in TIME_UNITS},
    **{unit: "size" for unit in SIZE_UNITS},
    **{unit: "rate" for unit in RATE_UNITS},
}
_FACTORS = {**TIME_UNITS, **SIZE_UNITS, **RATE_UNITS}

_LITERAL = re.compile(r"^(\d+(?:\.\d+)?)([A-Za-z/]*)$")


@dataclass(frozen=True)
class Quantity:
    value: int
    kind: str  # "time" | "size" | "rate" | "number"


class UnitError(ValueError):
    pass


def convert(number: str, unit: str) -> Quantity:
    """Convert a numeric string and a unit suffix to an exact Quantity"""
    if not unit:
        exact = Fraction(number)
        if exact.denominator != 1:
            raise UnitError(f"'{number}' is not an integer")
        return Quantity(int(exact), "number")
    if unit not in _FACTORS:
        raise UnitError(f"unknown unit '{unit}'")
    exact = Fraction(number) * _FACTORS[unit]
    if exact.denominator != 1:
        raise UnitError(f"'{number}{unit}' is not a whole number of base units")
    return Quantity(int(exact), UNIT_KINDS[unit])


def parse_quantity(text: str) -> Quantity:
    match = _LITERAL.match(text.strip())
    if not match:
        raise UnitError(f"malformed quantity '{text}'")
    return convert(match.group(1), match.group(2))


def _parse_kind(text: str, kind: str) -> int:
    quantity = parse_quantity(text)
    if quantity.kind != kind:
        raise UnitError(f"'{text}' is not a {kind} (got {quantity.kind})")
    return quantity.value


def parse_time(text: str) -> int:
    return _parse_kind(text, "time")


def parse_size(text: str) -> int:
    return _parse_kind(text, "size")


def parse_rate(text: str) -> int:
    return _parse_kind(text, "rate")


def _format(value: int, units: dict) -> str:
    for unit, factor in sorted(units.items(), key=lambda item: -item[1]):
        if value and value % factor == 0:
            return f"{value // factor}{unit}"
    smallest = min(units, key=units.get)
    return f"{value}{smallest}"


def format_time(ps: int) -> str:
    return _format(ps, TIME_UNITS)


def format_rate(bps: int) -> str:
    return _format(bps, RATE_UNITS)


def format_size(nbytes: int) -> str:
    return f"{nbytes}B"
