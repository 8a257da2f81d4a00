"""Command-line driver: check, run, and explore.

Exit codes: 0 success/Terminated, 1 type error, 2 parse error, 3 I/O
error, 4 refused exploration bounds, 10 Stuck, 11 OutOfGas, 20 audit
failure.  Trace records go to --trace (or stdout) as JSON lines, or
indented JSON under GVM_TRACE_FORMAT=pretty.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from .explore import ExploreRefused, explore_schedules
from .scheduler import (
    AuditFailure, Gas, Outcome, Plain, Structured, run, trace_record,
)
from .syntax import Expr, ParseError, parse_program, pretty_type
from .typecheck import TypeCheckError, check_program, equiv_types
from .syntax import UNIT

EXIT_OK = 0
EXIT_TYPE_ERROR = 1
EXIT_PARSE_ERROR = 2
EXIT_IO_ERROR = 3
EXIT_REFUSED = 4
EXIT_STUCK = 10
EXIT_OUT_OF_GAS = 11
EXIT_AUDIT = 20

MAX_EXPLORE_LEN = 64


@dataclass
class RunConfig:
    gas: Gas
    audit: bool = False
    trace_out: str | None = None


def _load(path: str) -> Expr:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read())


def _parse_and_check(path: str) -> Expr | int:
    """Load and typecheck, or return the exit code after printing the error."""
    try:
        expr = _load(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    try:
        check_program(expr)
    except TypeCheckError as exc:
        print(f"type error: {exc}", file=sys.stderr)
        return EXIT_TYPE_ERROR
    return expr


def cmd_check(path: str) -> int:
    try:
        expr = _load(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO_ERROR
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    try:
        inferred = check_program(expr)
    except TypeCheckError as exc:
        print(f"type error: {exc}", file=sys.stderr)
        return EXIT_TYPE_ERROR
    print(pretty_type(inferred))
    return EXIT_OK


def _write_trace(trace, destination: str | None) -> None:
    records = [trace_record(entry) for entry in trace]
    pretty = os.environ.get("GVM_TRACE_FORMAT", "lines") == "pretty"
    if pretty:
        text = json.dumps(records, indent=2) + "\n"
    else:
        text = "".join(json.dumps(r) + "\n" for r in records)
    if destination is None:
        sys.stdout.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_run(path: str, config: RunConfig) -> int:
    loaded = _parse_and_check(path)
    if isinstance(loaded, int):
        return loaded
    expr = loaded
    inferred = check_program(expr)
    if not equiv_types(inferred, UNIT):
        print(
            f"type error: runnable programs must have type unit, got {pretty_type(inferred)}",
            file=sys.stderr,
        )
        return EXIT_TYPE_ERROR
    try:
        outcome, trace = run(expr, config.gas, audit=config.audit)
    except AuditFailure as exc:
        print(f"audit failure: {exc}", file=sys.stderr)
        return EXIT_AUDIT
    _write_trace(trace, config.trace_out)
    print(f"outcome: {outcome.value}")
    if outcome is Outcome.TERMINATED:
        return EXIT_OK
    if outcome is Outcome.STUCK:
        return EXIT_STUCK
    return EXIT_OUT_OF_GAS


def cmd_explore(path: str, maxlen: int, maxrot: int) -> int:
    if maxlen > MAX_EXPLORE_LEN:
        print(f"error: --maxlen is capped at {MAX_EXPLORE_LEN}", file=sys.stderr)
        return EXIT_REFUSED
    loaded = _parse_and_check(path)
    if isinstance(loaded, int):
        return loaded
    try:
        report = explore_schedules(loaded, maxlen, maxrot)
    except ExploreRefused as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    names = sorted(outcome.value for outcome in report.outcome_set)
    print(f"outcomes: {{{', '.join(names)}}}")
    for outcome, witness in sorted(report.outcomes.items(), key=lambda kv: kv[0].value):
        pretty_witness = ",".join(str(r) for r in witness)
        print(f"witness {outcome.value}: [{pretty_witness}]")
    if report.exhausted_prefixes:
        print("note: some schedules ran out of budget before resolving")
    print(f"states visited: {report.states_visited}")
    return EXIT_OK


def _gas_from_args(args: argparse.Namespace) -> Gas:
    if args.schedule is not None:
        rotations = tuple(int(r) for r in args.schedule.split(",") if r != "")
        return Structured(rotations)
    return Plain(args.gas)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gvm", description="Typecheck and run session-typed programs."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="typecheck a program and print its type")
    p_check.add_argument("file")

    p_run = sub.add_parser("run", help="run a unit-typed program")
    p_run.add_argument("file")
    p_run.add_argument("--gas", type=int, default=10_000, help="plain step budget")
    p_run.add_argument(
        "--schedule", help="comma-separated rotations, one per step (structured gas)"
    )
    p_run.add_argument("--audit", action="store_true", help="verify invariants each step")
    p_run.add_argument("--trace", help="write the trace to this file instead of stdout")

    p_explore = sub.add_parser("explore", help="enumerate schedules up to a bound")
    p_explore.add_argument("file")
    p_explore.add_argument("--maxlen", type=int, required=True)
    p_explore.add_argument("--maxrot", type=int, required=True)

    args = parser.parse_args(argv)
    if args.command == "check":
        return cmd_check(args.file)
    if args.command == "run":
        if args.gas < 0:
            print("error: --gas must be >= 0", file=sys.stderr)
            return EXIT_IO_ERROR
        config = RunConfig(gas=_gas_from_args(args), audit=args.audit, trace_out=args.trace)
        return cmd_run(args.file, config)
    return cmd_explore(args.file, args.maxlen, args.maxrot)


if __name__ == "__main__":
    sys.exit(main())
