"""Algorithmic linear type checking with equi-recursive equivalence and subtyping.

Context splitting is inferred rather than annotated: the checker threads a
per-binding consumption mask through subexpressions, consuming a linear
binding at its use site and rejecting reuse or non-use.  Equivalence and
subtyping on recursive sessions use an assumption set: a pair is assumed
before descending, which bounds the recursion by the finitely many
subterm pairs of two mu-terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .syntax import (
    App, Branch, Chan, Choice, Close, Dir, End, Expr, Fork, Fun, LetBind,
    LetPair, Linearity, LLambda, New, Pair, PairE, Recv, Rec, Select, Send,
    SessionType, SrcPos, Subsume, Type, UNIT, Unit, UnitE, Var, Wait, Xmit,
    dual, is_unrestricted, unfold,
)

TypingContext = tuple[Type, ...]
ConsumptionMask = tuple[bool, ...]  # True = consumed


class ErrorKind(Enum):
    LINEARITY_VIOLATION = "LinearityViolation"
    UNUSED_LINEAR = "UnusedLinear"
    TYPE_MISMATCH = "TypeMismatch"
    ARITY_MISMATCH = "ArityMismatch"
    NOT_A_SUBTYPE = "NotASubtype"
    UNBOUND_VARIABLE = "UnboundVariable"
    UNRESTRICTED_CONTEXT_REQUIRED = "UnrestrictedContextRequired"


class TypeCheckError(Exception):
    def __init__(self, kind: ErrorKind, location: SrcPos | None, message: str):
        self.kind = kind
        self.location = location
        self.message = message
        where = f"{location[0]}:{location[1]}: " if location else ""
        super().__init__(f"{where}{kind.value}: {message}")


# ---------------------------------------------------------------------------
# Equivalence and subtyping
# ---------------------------------------------------------------------------

_AssumptionSet = set[tuple[SessionType, SessionType]]


def type_equiv(a: SessionType, b: SessionType) -> bool:
    """True iff `a` and `b` denote the same infinite unfolding."""
    return _sess_equiv(a, b, set())


def _sess_equiv(a: SessionType, b: SessionType, assume: _AssumptionSet) -> bool:
    if (a, b) in assume:
        return True
    assume.add((a, b))
    ua, ub = unfold(a), unfold(b)
    assume.add((ua, ub))
    match ua, ub:
        case End(d1), End(d2):
            return d1 is d2
        case Xmit(d1, t1, c1), Xmit(d2, t2, c2):
            return d1 is d2 and _type_equiv(t1, t2, assume) and _sess_equiv(c1, c2, assume)
        case Choice(d1, alts1), Choice(d2, alts2):
            return (
                d1 is d2
                and len(alts1) == len(alts2)
                and all(_sess_equiv(x, y, assume) for x, y in zip(alts1, alts2))
            )
        case _:
            return False


def equiv_types(a: Type, b: Type) -> bool:
    return _type_equiv(a, b, set())


def _type_equiv(a: Type, b: Type, assume: _AssumptionSet) -> bool:
    match a, b:
        case Unit(), Unit():
            return True
        case Pair(a1, a2), Pair(b1, b2):
            return _type_equiv(a1, b1, assume) and _type_equiv(a2, b2, assume)
        case Chan(s1), Chan(s2):
            return _sess_equiv(s1, s2, assume)
        case Fun(l1, a1, r1), Fun(l2, a2, r2):
            return l1 is l2 and _type_equiv(a1, a2, assume) and _type_equiv(r1, r2, assume)
        case _:
            return False


def sub_session(a: SessionType, b: SessionType) -> bool:
    """Session subtyping: a value of protocol `a` may serve where `b` is expected."""
    return _sub_sess(a, b, set())


def _sub_sess(a: SessionType, b: SessionType, assume: _AssumptionSet) -> bool:
    if (a, b) in assume:
        return True
    assume.add((a, b))
    ua, ub = unfold(a), unfold(b)
    assume.add((ua, ub))
    match ua, ub:
        case End(d1), End(d2):
            return d1 is d2
        case Xmit(Dir.SND, t1, c1), Xmit(Dir.SND, t2, c2):
            # Payload contravariant on the sending side.
            return _sub_type(t2, t1, assume) and _sub_sess(c1, c2, assume)
        case Xmit(Dir.RCV, t1, c1), Xmit(Dir.RCV, t2, c2):
            return _sub_type(t1, t2, assume) and _sub_sess(c1, c2, assume)
        case Choice(Dir.SND, alts1), Choice(Dir.SND, alts2):
            # Internal choice: the supertype offers fewer alternatives.
            if len(alts2) > len(alts1):
                return False
            return all(_sub_sess(x, y, assume) for x, y in zip(alts1[: len(alts2)], alts2))
        case Choice(Dir.RCV, alts1), Choice(Dir.RCV, alts2):
            # External choice: the supertype accepts more alternatives.
            if len(alts1) > len(alts2):
                return False
            return all(_sub_sess(x, y, assume) for x, y in zip(alts1, alts2[: len(alts1)]))
        case _:
            return False


def subtype(a: Type, b: Type) -> bool:
    return _sub_type(a, b, set())


def _sub_type(a: Type, b: Type, assume: _AssumptionSet) -> bool:
    match a, b:
        case Unit(), Unit():
            return True
        case Pair(a1, a2), Pair(b1, b2):
            return _sub_type(a1, b1, assume) and _sub_type(a2, b2, assume)
        case Chan(s1), Chan(s2):
            return _sub_sess(s1, s2, assume)
        case Fun(l1, a1, r1), Fun(l2, a2, r2):
            # Linearity markers must match exactly.
            return l1 is l2 and _sub_type(a2, a1, assume) and _sub_type(r1, r2, assume)
        case _:
            return False


# ---------------------------------------------------------------------------
# Expression checking
# ---------------------------------------------------------------------------


def _is_linear(t: Type) -> bool:
    return not is_unrestricted(t)


def _lookup(
    ctx: TypingContext, mask: ConsumptionMask, k: int, pos: SrcPos | None
) -> tuple[Type, ConsumptionMask]:
    if k < 0 or k >= len(ctx):
        raise TypeCheckError(ErrorKind.UNBOUND_VARIABLE, pos, f"index {k} out of scope")
    if mask[k]:
        raise TypeCheckError(
            ErrorKind.LINEARITY_VIOLATION, pos, "linear binding used more than once"
        )
    t = ctx[k]
    if _is_linear(t):
        mask = mask[:k] + (True,) + mask[k + 1 :]
    return t, mask


def _require_consumed(
    mask: ConsumptionMask, k: int, t: Type, pos: SrcPos | None, what: str
) -> None:
    if _is_linear(t) and not mask[k]:
        raise TypeCheckError(ErrorKind.UNUSED_LINEAR, pos, f"{what} is never used")


def _chan_session(t: Type, pos: SrcPos | None, what: str) -> SessionType:
    if not isinstance(t, Chan):
        raise TypeCheckError(ErrorKind.TYPE_MISMATCH, pos, f"{what} needs a channel")
    return t.sess


def check_expr(
    ctx: TypingContext, mask: ConsumptionMask, e: Expr
) -> tuple[Type, ConsumptionMask]:
    """Infer `e`'s type, returning the mask with `e`'s consumption recorded."""
    match e:
        case Var(k):
            return _lookup(ctx, mask, k, e.pos)

        case UnitE():
            return UNIT, mask

        case PairE(k1, k2):
            t1, mask = _lookup(ctx, mask, k1, e.pos)
            t2, mask = _lookup(ctx, mask, k2, e.pos)
            return Pair(t1, t2), mask

        case LetPair(k, body):
            tp, mask = _lookup(ctx, mask, k, e.pos)
            if not isinstance(tp, Pair):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "letpair needs a pair")
            inner_ctx = (tp.snd, tp.fst) + ctx
            inner_mask = (False, False) + mask
            tb, out = check_expr(inner_ctx, inner_mask, body)
            _require_consumed(out, 0, tp.snd, e.pos, "second pair component")
            _require_consumed(out, 1, tp.fst, e.pos, "first pair component")
            return tb, out[2:]

        case LetBind(e1, e2):
            t1, mask = check_expr(ctx, mask, e1)
            tb, out = check_expr((t1,) + ctx, (False,) + mask, e2)
            _require_consumed(out, 0, t1, e.pos, "let-bound value")
            return tb, out[1:]

        case Fork(body):
            tb, mask = check_expr(ctx, mask, body)
            if not equiv_types(tb, UNIT):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "forked body must have type unit")
            return UNIT, mask

        case New(s):
            return Pair(Chan(s), Chan(dual(s))), mask

        case Close(k):
            t, mask = _lookup(ctx, mask, k, e.pos)
            s = _chan_session(t, e.pos, "close")
            if not type_equiv(s, End(Dir.SND)):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "close needs a chan end!")
            return UNIT, mask

        case Wait(k):
            t, mask = _lookup(ctx, mask, k, e.pos)
            s = _chan_session(t, e.pos, "wait")
            if not type_equiv(s, End(Dir.RCV)):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "wait needs a chan end?")
            return UNIT, mask

        case Send(kch, kval):
            tch, mask = _lookup(ctx, mask, kch, e.pos)
            head = unfold(_chan_session(tch, e.pos, "send"))
            if not (isinstance(head, Xmit) and head.dir is Dir.SND):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "send needs a sending channel")
            tv, mask = _lookup(ctx, mask, kval, e.pos)
            if not subtype(tv, head.payload):
                raise TypeCheckError(
                    ErrorKind.NOT_A_SUBTYPE, e.pos, "sent value does not fit the payload type"
                )
            return Chan(head.cont), mask

        case Recv(k):
            t, mask = _lookup(ctx, mask, k, e.pos)
            head = unfold(_chan_session(t, e.pos, "recv"))
            if not (isinstance(head, Xmit) and head.dir is Dir.RCV):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "recv needs a receiving channel")
            return Pair(Chan(head.cont), head.payload), mask

        case Select(label, k):
            t, mask = _lookup(ctx, mask, k, e.pos)
            head = unfold(_chan_session(t, e.pos, "select"))
            if not (isinstance(head, Choice) and head.dir is Dir.SND):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "select needs an internal choice")
            if label >= len(head.alts):
                raise TypeCheckError(
                    ErrorKind.ARITY_MISMATCH, e.pos,
                    f"label {label} out of range for {len(head.alts)} alternatives",
                )
            return Chan(head.alts[label]), mask

        case Branch(k, cases):
            t, mask = _lookup(ctx, mask, k, e.pos)
            head = unfold(_chan_session(t, e.pos, "branch"))
            if not (isinstance(head, Choice) and head.dir is Dir.RCV):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "branch needs an external choice")
            if len(cases) != len(head.alts):
                raise TypeCheckError(
                    ErrorKind.ARITY_MISMATCH, e.pos,
                    f"branch has {len(cases)} cases for {len(head.alts)} alternatives",
                )
            result: Type | None = None
            common: ConsumptionMask | None = None
            for alt, case_body in zip(head.alts, cases):
                case_t = Chan(alt)
                tb, out = check_expr((case_t,) + ctx, (False,) + mask, case_body)
                _require_consumed(out, 0, case_t, e.pos, "branch continuation channel")
                if result is None:
                    result, common = tb, out[1:]
                    continue
                if not equiv_types(tb, result):
                    raise TypeCheckError(
                        ErrorKind.TYPE_MISMATCH, e.pos, "branch cases have different result types"
                    )
                if out[1:] != common:
                    raise TypeCheckError(
                        ErrorKind.LINEARITY_VIOLATION, e.pos,
                        "branch cases consume different linear bindings",
                    )
            assert result is not None and common is not None
            return result, common

        case LLambda(param, body):
            tb, out = check_expr((param,) + ctx, (False,) + mask, body)
            _require_consumed(out, 0, param, e.pos, "lambda parameter")
            return Fun(Linearity.LL, param, tb), out[1:]

        case Rec(fun_type, body):
            if not (isinstance(fun_type, Fun) and fun_type.lin is Linearity.UU):
                raise TypeCheckError(
                    ErrorKind.TYPE_MISMATCH, e.pos, "rec needs an unrestricted function type"
                )
            for i, t in enumerate(ctx):
                if not mask[i] and _is_linear(t):
                    raise TypeCheckError(
                        ErrorKind.UNRESTRICTED_CONTEXT_REQUIRED, e.pos,
                        "rec closes only over unrestricted bindings",
                    )
            inner_ctx = (fun_type.arg, fun_type) + ctx
            tb, out = check_expr(inner_ctx, (False, False) + mask, body)
            _require_consumed(out, 0, fun_type.arg, e.pos, "rec parameter")
            if not equiv_types(tb, fun_type.res):
                raise TypeCheckError(
                    ErrorKind.TYPE_MISMATCH, e.pos, "rec body does not match the declared result"
                )
            return fun_type, out[2:]

        case App(kf, ka):
            tf, mask = _lookup(ctx, mask, kf, e.pos)
            if not isinstance(tf, Fun):
                raise TypeCheckError(ErrorKind.TYPE_MISMATCH, e.pos, "app needs a function")
            ta, mask = _lookup(ctx, mask, ka, e.pos)
            if not subtype(ta, tf.arg):
                raise TypeCheckError(
                    ErrorKind.NOT_A_SUBTYPE, e.pos, "argument does not fit the parameter type"
                )
            return tf.res, mask

        case Subsume(k, target):
            t, mask = _lookup(ctx, mask, k, e.pos)
            if not subtype(t, target):
                raise TypeCheckError(ErrorKind.NOT_A_SUBTYPE, e.pos, "subsumption target is not a supertype")
            return target, mask

    raise AssertionError(e)


def check_program(e: Expr) -> Type:
    """Check a closed program and return its type."""
    t, _ = check_expr((), (), e)
    return t
