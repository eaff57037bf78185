"""
Run orchestration shared by the CLI and the HTTP API.

A run is fully described by the scenario text, the overrides, the seed
and the duration; replicas and sweep points are independent runs that may
execute in worker processes and are merged in submission order.
"""
import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from app.andl.parser import parse
from app.andl.validator import OVERRIDES, NetworkModel, validate
from app.config import settings
from app.models.schemas import RunConfig, StreamRow, ViolationRow
from app.results.constraints import ConstraintRule, load_constraints, parse_constraints
from app.results.writers import (
    config_digest,
    stream_rows,
    violation_rows,
    write_stats,
    write_trace,
    write_violations,
)
from app.sim.network import RunResult, Simulation

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2

SWEEP_COLUMNS = ["value", "replica", "stream", "class", "max_latency_ps", "jitter_ps"]


def load_model(text: str, overrides: Optional[dict[str, str]] = None) -> NetworkModel:
    return validate(parse(text), overrides)


def read_scenario(path) -> str:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"scenario file not found: {path}")
    return path.read_text(encoding="utf-8")


@dataclass
class RunOutcome:
    """Picklable digest of one finished run"""

    network: str
    seed: int
    until: int
    events_processed: int
    final_time: int
    stopped_early: bool
    stop_reason: Optional[str]
    streams: list[StreamRow]
    violations: list[ViolationRow]
    files: list[Path] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_VIOLATION if self.violations else EXIT_OK


def simulate_text(text: str, overrides: dict[str, str], seed: Optional[int], until: Optional[int],
                  rules: Optional[list[ConstraintRule]] = None, capture: bool = False) -> RunResult:
    model = load_model(text, overrides)
    return Simulation(model, seed, rules, capture).run(until)


def _outcome(result: RunResult, files: list[Path]) -> RunOutcome:
    return RunOutcome(
        network=result.network,
        seed=result.seed,
        until=result.until,
        events_processed=result.summary.events_processed,
        final_time=result.summary.final_time,
        stopped_early=result.stopped_early,
        stop_reason=result.summary.stop_reason,
        streams=stream_rows(result.collector),
        violations=violation_rows(result.violations),
        files=files,
    )


def execute(config: RunConfig, text: str, replica: int = 0, stem: Optional[str] = None) -> RunOutcome:
    """Run one replica and write every requested result file"""
    rules = load_constraints(config.constraints) if config.constraints else None
    seed = config.seed
    if seed is None:
        seed = load_model(text, config.overrides).seed
        seed = settings.DEFAULT_SEED if seed is None else seed
    seed += replica
    result = simulate_text(text, config.overrides, seed, config.until, rules, config.pcap)

    out = Path(config.out)
    stem = stem or (result.network if config.replicas == 1 else f"{result.network}-r{replica}")
    digest = config_digest(text, config.overrides, seed)
    metadata = {
        "network": result.network,
        "seed": seed,
        "until_ps": result.until,
        "events_processed": result.summary.events_processed,
        "final_time_ps": result.summary.final_time,
        "stopped_early": result.stopped_early,
    }
    files = [write_stats(result.collector, fmt, out / f"{stem}.{fmt}", digest, metadata) for fmt in config.formats]
    if config.pcap:
        files.append(write_trace(result.trace, out / f"{stem}.pcap"))
    if rules is not None:
        files.append(write_violations(result.violations, out / f"{stem}.violations.txt", result.summary.stop_reason))
    return _outcome(result, files)


def _execute_job(args: tuple) -> RunOutcome:
    return execute(*args)


def _map(jobs: list[tuple], workers: int) -> list[RunOutcome]:
    if workers <= 1 or len(jobs) <= 1:
        return [_execute_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_job, jobs))


def run_scenario(config: RunConfig, jobs: Optional[int] = None) -> list[RunOutcome]:
    text = read_scenario(config.scenario)
    load_model(text, config.overrides)
    if config.constraints:
        load_constraints(config.constraints)
    outcomes = _map([(config, text, replica) for replica in range(config.replicas)],
                    jobs or settings.MAX_JOBS)
    for outcome in outcomes:
        logger.info(f"{outcome.network} seed {outcome.seed}: {outcome.events_processed} events, "
                    f"{len(outcome.violations)} violations")
    return outcomes


def sweep(config: RunConfig, param: str, values: list[str],
          jobs: Optional[int] = None) -> tuple[list[dict], Path, list[RunOutcome]]:
    """One run per (value, replica); returns merged rows, the merged CSV path and the outcomes"""
    if param not in OVERRIDES:
        raise ValueError(f"unknown sweep parameter '{param}' (known: {', '.join(sorted(OVERRIDES))})")
    if not values:
        raise ValueError("sweep needs at least one value")
    text = read_scenario(config.scenario)
    batch = []
    for value in values:
        point = config.model_copy(update={"overrides": {**config.overrides, param: value}})
        load_model(text, point.overrides)
        for replica in range(config.replicas):
            stem = f"{param}={value}" + (f"-r{replica}" if config.replicas > 1 else "")
            batch.append((point, text, replica, stem))
    outcomes = _map(batch, jobs or settings.MAX_JOBS)

    rows = []
    for (point, _, replica, _), outcome in zip(batch, outcomes):
        for stream in outcome.streams:
            rows.append({
                "value": point.overrides[param],
                "replica": replica,
                "stream": stream.stream,
                "class": stream.traffic_class,
                "max_latency_ps": "" if stream.max_ps is None else stream.max_ps,
                "jitter_ps": stream.jitter_ps,
            })
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    path = Path(config.out) / f"sweep_{param}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buffer.getvalue(), encoding="utf-8", newline="")
    logger.info(f"Sweep over {param}: {len(values)} values, {len(rows)} rows written to {path}")
    return rows, path, outcomes


def constraints_from_text(text: Optional[str]) -> Optional[list[ConstraintRule]]:
    return parse_constraints(text) if text else None
