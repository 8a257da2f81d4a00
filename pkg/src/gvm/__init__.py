"""gvm: interpreter and cooperative runtime for a linear, session-typed calculus.

Pipeline: `parse_program` resolves surface syntax to de Bruijn terms,
`check_program` enforces linear and session typing, and `run` drives the
suspended-command machine under a gas budget with optional per-step
auditing of the resource invariants.
"""

from .asynclib import async_session, build_anew, build_arecv, build_asend
from .scheduler import (
    Gas, Outcome, Plain, Structured, run, schedule, start, step,
)
from .syntax import (
    Expr, ParseError, SessionType, Type, dual, is_unrestricted, parse_program,
    parse_session, parse_type, pretty_expr, pretty_session, pretty_type,
    unfold,
)
from .typecheck import TypeCheckError, check_expr, check_program, subtype, type_equiv

__all__ = [
    "Expr", "Gas", "Outcome", "ParseError", "Plain", "SessionType",
    "Structured", "Type", "TypeCheckError", "async_session", "build_anew",
    "build_arecv", "build_asend", "check_expr", "check_program", "dual",
    "is_unrestricted", "parse_program", "parse_session", "parse_type",
    "pretty_expr", "pretty_session", "pretty_type", "run", "schedule",
    "start", "step", "subtype", "type_equiv", "unfold",
]
