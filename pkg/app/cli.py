"""
Command-line entry point: ``python -m app.cli <command> ...``

    validate  SCENARIO                 check a scenario, print diagnostics
    run       SCENARIO [options]       simulate and write result files
    sweep     SCENARIO --param P --values v1,v2,...
    schedule  SCENARIO                 print the generated TT schedule

Exit codes: 0 clean, 1 constraint violation or infeasible schedule,
2 configuration error.
"""
import argparse
import logging
import sys
from typing import Optional

from pydantic import ValidationError

from app.andl.ast import AndlError
from app.andl.scheduler import generate_tt_schedule, schedule_rows
from app.andl.units import UnitError, format_time, parse_time
from app.config import settings
from app.models.schemas import RunConfig
from app.runner import EXIT_CONFIG, EXIT_OK, EXIT_VIOLATION, load_model, read_scenario, run_scenario, sweep
from app.sim.errors import DispatchError, Infeasible, LcmOverflow

logger = logging.getLogger(__name__)


def _time(text: str) -> int:
    try:
        return parse_time(text)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _override(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got '{text}'")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carnet-sim", description="Automotive network simulator")
    commands = parser.add_subparsers(dest="command", required=True)

    validate = commands.add_parser("validate", help="parse and validate a scenario")
    validate.add_argument("scenario")
    validate.add_argument("--override", action="append", type=_override, default=[])

    schedule = commands.add_parser("schedule", help="print the generated TT schedule")
    schedule.add_argument("scenario")
    schedule.add_argument("--override", action="append", type=_override, default=[])

    for name in ("run", "sweep"):
        command = commands.add_parser(name, help=f"{name} a scenario")
        command.add_argument("scenario")
        command.add_argument("--until", type=_time, help="simulated duration, e.g. 100ms")
        command.add_argument("--seed", type=int)
        command.add_argument("--constraints", help="constraint XML file")
        command.add_argument("--out", default=settings.OUTPUT_DIR)
        command.add_argument("--format", dest="formats", action="append", default=[],
                             help="csv or json; repeat or comma-separate for several")
        command.add_argument("--pcap", action="store_true")
        command.add_argument("--override", action="append", type=_override, default=[])
        command.add_argument("--replicas", type=int, default=1)
        command.add_argument("--jobs", type=int, default=settings.MAX_JOBS)
        if name == "sweep":
            command.add_argument("--param", required=True)
            command.add_argument("--values", required=True, help="comma-separated override values")
    return parser


def _config(args) -> RunConfig:
    formats = [fmt.strip() for item in args.formats for fmt in item.split(",") if fmt.strip()] or ["csv"]
    return RunConfig(
        scenario=args.scenario,
        until=args.until,
        seed=args.seed,
        overrides=dict(args.override),
        constraints=args.constraints,
        out=args.out,
        formats=formats,
        pcap=args.pcap,
        replicas=args.replicas,
    )


def cmd_validate(args) -> int:
    model = load_model(read_scenario(args.scenario), dict(args.override))
    for warning in model.warnings:
        print(f"{args.scenario}:{warning}", file=sys.stderr)
    print(f"{args.scenario}: ok ({len(model.devices)} devices, {len(model.segments)} segments, "
          f"{len(model.messages)} messages)")
    return EXIT_OK


def cmd_run(args) -> int:
    outcomes = run_scenario(_config(args), args.jobs)
    code = EXIT_OK
    for outcome in outcomes:
        for path in outcome.files:
            print(path)
        for violation in outcome.violations:
            print(f"violation: {violation.rule} {violation.bound} at {violation.time_ps}ps "
                  f"({violation.module} = {violation.value})", file=sys.stderr)
        if outcome.stopped_early:
            print(f"stopped at {outcome.final_time}ps: {outcome.stop_reason}", file=sys.stderr)
        code = max(code, outcome.exit_code)
    return code


def cmd_sweep(args) -> int:
    values = [value.strip() for value in args.values.split(",") if value.strip()]
    _, path, outcomes = sweep(_config(args), args.param, values, args.jobs)
    print(path)
    return max((outcome.exit_code for outcome in outcomes), default=EXIT_OK)


def cmd_schedule(args) -> int:
    model = load_model(read_scenario(args.scenario), dict(args.override))
    try:
        schedules = generate_tt_schedule(model)
    except (Infeasible, LcmOverflow) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    cycle = next(iter(schedules.values())).cycle if schedules else 0
    print(f"cycle {format_time(cycle)} ({cycle}ps)")
    for row in schedule_rows(schedules):
        print(f"{row['port']:<24} offset {row['offset_ps']:>14}ps  ctID {row['ct_id']:<6} "
              f"window {row['window_ps']}ps  period {row['period_ps']}ps")
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "run": cmd_run, "sweep": cmd_sweep, "schedule": cmd_schedule}


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        settings.validate()
        return COMMANDS[args.command](args)
    except AndlError as exc:
        for diagnostic in exc.diagnostics:
            print(f"{args.scenario}:{diagnostic}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"error: {exc.errors()[0]['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except DispatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
