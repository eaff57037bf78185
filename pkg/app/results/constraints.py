"""
Declarative bounds on recorded result vectors.

Rules are loaded from XML:

    <constraints>
      <constraint module="Network.node1" name="rxMessageAge:vector" action="stop">
        <min>1.5</min>
        <max>1.7</max>
      </constraint>
      <constraint module="(.*)\\.node2" moduleIsRegex="true"
                  name="(rx|tx)MessageAge:vector" nameIsRegex="true">
        <avg_min samples="10">1.5</avg_min>
        <avg_max samples="10">1.7</avg_max>
        <interval_max window="10ms">1.7</interval_max>
        <sum_max>100</sum_max>
      </constraint>
    </constraints>
"""
import logging
import re
import xml.etree.ElementTree as ET
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from app.andl.units import UnitError, parse_time

logger = logging.getLogger(__name__)

ACTIONS = ("report", "stop")
_TRUE = {"true", "1", "yes"}


@dataclass(frozen=True)
class ConstraintRule:
    module: str
    name: str
    module_is_regex: bool = False
    name_is_regex: bool = False
    min: Optional[Fraction] = None
    max: Optional[Fraction] = None
    avg_min: Optional[tuple[int, Fraction]] = None
    avg_max: Optional[tuple[int, Fraction]] = None
    interval_min: Optional[tuple[int, Fraction]] = None
    interval_max: Optional[tuple[int, Fraction]] = None
    sum_max: Optional[Fraction] = None
    action: str = "report"

    def __post_init__(self):
        bounds = (self.min, self.max, self.avg_min, self.avg_max, self.interval_min, self.interval_max,
                  self.sum_max)
        if all(bound is None for bound in bounds):
            raise ValueError(f"constraint on {self.module}/{self.name} declares no bound")
        for bound in (self.avg_min, self.avg_max):
            if bound is not None and bound[0] < 1:
                raise ValueError("samples must be at least 1")
        for bound in (self.interval_min, self.interval_max):
            if bound is not None and bound[0] <= 0:
                raise ValueError("window must be positive")
        if self.action not in ACTIONS:
            raise ValueError(f"action must be one of {ACTIONS}, got '{self.action}'")

    def matches(self, module: str, metric: str) -> bool:
        return (_match(self.module, module, self.module_is_regex)
                and _match(self.name, metric, self.name_is_regex))

    @property
    def label(self) -> str:
        return f"{self.module}/{self.name}"


def _match(pattern: str, text: str, is_regex: bool) -> bool:
    return re.fullmatch(pattern, text) is not None if is_regex else pattern == text


@dataclass(frozen=True)
class Violation:
    rule: str
    bound: str
    limit: Fraction
    module: str
    metric: str
    value: Fraction
    time: int
    action: str

    def describe(self) -> str:
        return (f"{self.rule}: {self.bound} {float(self.limit):g} violated by {self.module} "
                f"{self.metric}={float(self.value):g} at {self.time}ps")


@dataclass
class SeriesState:
    """What the checker remembers about one (rule, module, metric) series"""

    recent: deque = field(default_factory=deque)
    timed: deque = field(default_factory=deque)
    total: Fraction = Fraction(0)
    seen: int = 0


@dataclass
class CheckerState:
    series: dict[tuple[int, str, str], SeriesState] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)
    stopped: Optional[Violation] = None


def _evaluate(rule: ConstraintRule, series: SeriesState, value: Fraction, time: int) -> list[tuple[str, Fraction]]:
    broken: list[tuple[str, Fraction]] = []
    if rule.min is not None and value < rule.min:
        broken.append(("min", rule.min))
    if rule.max is not None and value > rule.max:
        broken.append(("max", rule.max))

    for kind, bound in (("avg_min", rule.avg_min), ("avg_max", rule.avg_max)):
        if bound is None:
            continue
        samples, limit = bound
        window = list(series.recent)[-samples:]
        if len(window) < samples:
            continue
        mean = sum(window, Fraction(0)) / samples
        if (kind == "avg_min" and mean < limit) or (kind == "avg_max" and mean > limit):
            broken.append((kind, limit))

    for kind, bound in (("interval_min", rule.interval_min), ("interval_max", rule.interval_max)):
        if bound is None or time < bound[0]:
            continue
        span, limit = bound
        inside = [v for t, v in series.timed if t > time - span]
        mean = sum(inside, Fraction(0)) / len(inside)
        if (kind == "interval_min" and mean < limit) or (kind == "interval_max" and mean > limit):
            broken.append((kind, limit))

    if rule.sum_max is not None and series.total > rule.sum_max:
        broken.append(("sum_max", rule.sum_max))
    return broken


def check_constraints(rules: list[ConstraintRule], sample: tuple[str, str, Fraction], time: int,
                      state: CheckerState) -> tuple[list[Violation], bool]:
    """Feed one sample to every matching rule; return new violations and whether to stop"""
    module, metric, value = sample
    value = Fraction(value)
    found: list[Violation] = []
    stop = False
    for index, rule in enumerate(rules):
        if not rule.matches(module, metric):
            continue
        series = state.series.setdefault((index, module, metric), SeriesState())
        series.seen += 1
        series.total += value
        series.recent.append(value)
        longest = max((b[0] for b in (rule.avg_min, rule.avg_max) if b is not None), default=1)
        while len(series.recent) > longest:
            series.recent.popleft()
        series.timed.append((time, value))
        span = max((b[0] for b in (rule.interval_min, rule.interval_max) if b is not None), default=0)
        while series.timed and series.timed[0][0] <= time - span:
            series.timed.popleft()
        for bound, limit in _evaluate(rule, series, value, time):
            violation = Violation(rule.label, bound, limit, module, metric, value, time, rule.action)
            logger.warning(f"constraint violated: {violation.describe()}")
            found.append(violation)
            if rule.action == "stop":
                stop = True
    state.violations.extend(found)
    if stop and state.stopped is None:
        state.stopped = next(v for v in found if v.action == "stop")
    return found, stop


class ConstraintChecker:
    def __init__(self, rules: list[ConstraintRule]):
        self.rules = rules
        self.state = CheckerState()

    @property
    def violations(self) -> list[Violation]:
        return self.state.violations

    def check(self, module: str, metric: str, value: Fraction, time: int) -> tuple[list[Violation], bool]:
        return check_constraints(self.rules, (module, metric, value), time, self.state)


def _fraction(element: ET.Element) -> Fraction:
    text = (element.text or "").strip()
    try:
        return Fraction(text)
    except ValueError:
        raise ValueError(f"<{element.tag}> bound '{text}' is not a number") from None


def _counted(element: ET.Element, attribute: str, parse) -> tuple[int, Fraction]:
    raw = element.get(attribute)
    if raw is None:
        raise ValueError(f"<{element.tag}> needs a '{attribute}' attribute")
    try:
        amount = parse(raw)
    except (ValueError, UnitError) as exc:
        raise ValueError(f"<{element.tag} {attribute}='{raw}'>: {exc}") from None
    return amount, _fraction(element)


def parse_constraints(text: str) -> list[ConstraintRule]:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ValueError(f"constraint XML: {exc}") from None
    if root.tag != "constraints":
        raise ValueError(f"constraint XML root must be <constraints>, got <{root.tag}>")
    rules = []
    for element in root.findall("constraint"):
        module, name = element.get("module"), element.get("name")
        if module is None or name is None:
            raise ValueError("every <constraint> needs module and name attributes")
        bounds: dict = {}
        for child in element:
            if child.tag in ("min", "max", "sum_max"):
                bounds[child.tag] = _fraction(child)
            elif child.tag in ("avg_min", "avg_max"):
                bounds[child.tag] = _counted(child, "samples", int)
            elif child.tag in ("interval_min", "interval_max"):
                bounds[child.tag] = _counted(child, "window", parse_time)
            else:
                raise ValueError(f"unknown constraint bound <{child.tag}>")
        rules.append(ConstraintRule(
            module=module,
            name=name,
            module_is_regex=element.get("moduleIsRegex", "false").lower() in _TRUE,
            name_is_regex=element.get("nameIsRegex", "false").lower() in _TRUE,
            action=element.get("action", "report"),
            **bounds,
        ))
    return rules


def load_constraints(path) -> list[ConstraintRule]:
    return parse_constraints(Path(path).read_text(encoding="utf-8"))
