"""Runtime values, continuations, and the stuttering decompose step.

`decompose` performs only administrative work: it walks an expression,
splits the environment by free-variable usage, and suspends into a
Command as soon as an effect (fork, channel operation, application, or
plain value delivery) must run.  All effects are executed by the
scheduler; channel ends are held by exactly one value at a time, which
`channel_ends` makes checkable.

Channels are identified by absolute, never-reused ids, so nothing needs
reindexing when the scheduler allocates a new channel.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .syntax import (
    App, Branch, Close, Expr, Fork, LetBind, LetPair, Linearity, LLambda,
    New, PairE, Rec, Recv, Select, Send, SessionType, Subsume, UnitE, Var,
    Wait, free_vars, shift_expr,
)


class MachineFault(Exception):
    """An internal invariant broke; impossible for typechecked programs."""


class Polarity(Enum):
    POS = "+"
    NEG = "-"


def flip_pol(p: Polarity) -> Polarity:
    return Polarity.NEG if p is Polarity.POS else Polarity.POS


@dataclass(frozen=True)
class ChannelEnd:
    id: int
    pol: Polarity


@dataclass(frozen=True)
class VUnit:
    pass


@dataclass(frozen=True)
class VPair:
    fst: "Val"
    snd: "Val"


@dataclass(frozen=True)
class VChan:
    end: ChannelEnd


@dataclass(frozen=True)
class VClosure:
    """LL closures bind only their parameter; UU closures re-bind themselves
    at index 1 when applied (recursive functions)."""

    lin: Linearity
    body: Expr
    env: "VEnv"


@dataclass(frozen=True)
class VLabel:
    """A received choice label; internal to trace digests."""

    label: int


Val = VUnit | VPair | VChan | VClosure | VLabel

# Positionally matches a typing context; None marks a slot whose value was
# routed to another owner by an environment split.
VEnv = tuple["Val | None", ...]


@dataclass(frozen=True)
class Halt:
    pass


@dataclass(frozen=True)
class Bind:
    """A frozen decompose call: resume `body` under `env` extended with the
    incoming value, then continue with `next`."""

    body: Expr
    env: VEnv
    next: "Cont"


Cont = Halt | Bind


@dataclass(frozen=True)
class Ready:
    v: Val
    k: Cont


@dataclass(frozen=True)
class HaltC:
    v: Val


@dataclass(frozen=True)
class ForkC:
    thunk_new: Cont
    thunk_cur: Cont


@dataclass(frozen=True)
class NewC:
    sess: SessionType
    k: Cont


@dataclass(frozen=True)
class CloseC:
    ch: ChannelEnd
    k: Cont


@dataclass(frozen=True)
class WaitC:
    ch: ChannelEnd
    k: Cont


@dataclass(frozen=True)
class SendC:
    ch: ChannelEnd
    v: Val
    k: Cont


@dataclass(frozen=True)
class RecvC:
    ch: ChannelEnd
    k: Cont


@dataclass(frozen=True)
class SelectC:
    label: int
    ch: ChannelEnd
    k: Cont


@dataclass(frozen=True)
class BranchCase:
    body: Expr
    env: VEnv


@dataclass(frozen=True)
class BranchC:
    """Case environments are restrictions of one shared environment; exactly
    one case will run, so their ends count once."""

    ch: ChannelEnd
    cases: tuple[BranchCase, ...]
    k: Cont


Command = (
    Ready | HaltC | ForkC | NewC | CloseC | WaitC | SendC | RecvC
    | SelectC | BranchC
)


# ---------------------------------------------------------------------------
# Environment plumbing
# ---------------------------------------------------------------------------


def extend(env: VEnv, v: Val) -> VEnv:
    return (v,) + env


def restrict(env: VEnv, needed: frozenset[int] | set[int]) -> VEnv:
    """Keep only the needed slots, blanking the rest and trimming the tail.

    Blanked slots held no channel ends for typechecked programs: a linear
    value is always in the free variables of the side that consumes it.
    """
    if not needed:
        return ()
    width = max(needed) + 1
    return tuple(env[i] if i in needed else None for i in range(width))


def _fetch(env: VEnv, k: int) -> Val:
    if k >= len(env) or env[k] is None:
        raise MachineFault(f"environment slot {k} is not available")
    v = env[k]
    assert v is not None
    return v


def _fetch_chan(env: VEnv, k: int) -> ChannelEnd:
    v = _fetch(env, k)
    if not isinstance(v, VChan):
        raise MachineFault("expected a channel value")
    return v.end


def _body_env(env: VEnv, body: Expr, binders: int) -> VEnv:
    """Outer-environment part for a frame whose body adds `binders` slots."""
    outer = {k - binders for k in free_vars(body) if k >= binders}
    return restrict(env, outer)


# ---------------------------------------------------------------------------
# Decompose and continuation application
# ---------------------------------------------------------------------------


def decompose(e: Expr, env: VEnv, k: Cont) -> Command:
    """Run administrative reductions and suspend into the next Command.

    The caller must pass an environment holding exactly the values for
    `e`'s free variables; every case below re-splits it for subterms.
    """
    match e:
        case Var(ix):
            return Ready(_fetch(env, ix), k)

        case UnitE():
            return Ready(VUnit(), k)

        case PairE(k1, k2):
            return Ready(VPair(_fetch(env, k1), _fetch(env, k2)), k)

        case LetBind(e1, e2):
            env1 = restrict(env, free_vars(e1))
            frame = Bind(e2, _body_env(env, e2, 1), k)
            return decompose(e1, env1, frame)

        case LetPair(ix, body):
            v = _fetch(env, ix)
            if not isinstance(v, VPair):
                raise MachineFault("letpair on a non-pair value")
            blanked = tuple(None if i == ix else slot for i, slot in enumerate(env))
            inner = extend(extend(blanked, v.fst), v.snd)
            return decompose(body, restrict(inner, free_vars(body)), k)

        case Fork(body):
            # The child thunk is applied to unit; shifting lets the body
            # ignore that extra binding.
            child = Bind(shift_expr(body, 1), env, Halt())
            return ForkC(child, k)

        case New(s):
            return NewC(s, k)

        case Close(ix):
            return CloseC(_fetch_chan(env, ix), k)

        case Wait(ix):
            return WaitC(_fetch_chan(env, ix), k)

        case Send(kch, kval):
            return SendC(_fetch_chan(env, kch), _fetch(env, kval), k)

        case Recv(ix):
            return RecvC(_fetch_chan(env, ix), k)

        case Select(label, ix):
            return SelectC(label, _fetch_chan(env, ix), k)

        case Branch(ix, cases):
            ch = _fetch_chan(env, ix)
            blanked = tuple(None if i == ix else slot for i, slot in enumerate(env))
            packed = tuple(
                BranchCase(case, _body_env(blanked, case, 1)) for case in cases
            )
            return BranchC(ch, packed, k)

        case LLambda(_, body):
            return Ready(VClosure(Linearity.LL, body, env), k)

        case Rec(_, body):
            return Ready(VClosure(Linearity.UU, body, env), k)

        case App(kf, ka):
            clos = _fetch(env, kf)
            if not isinstance(clos, VClosure):
                raise MachineFault("application of a non-closure")
            arg = _fetch(env, ka)
            if clos.lin is Linearity.UU:
                # Recursive function: re-expose the closure to its body.
                body_env = extend(clos.env, clos)
            else:
                body_env = clos.env
            return Ready(arg, Bind(clos.body, body_env, k))

        case Subsume(ix, _):
            # Coercion has no value-level effect in this representation.
            return Ready(_fetch(env, ix), k)

    raise AssertionError(e)


def apply_cont(k: Cont, v: Val) -> Command:
    match k:
        case Halt():
            if channel_ends(v):
                raise MachineFault("halting with live channel ends")
            return HaltC(v)
        case Bind(body, env, nxt):
            return decompose(body, extend(env, v), nxt)
    raise AssertionError(k)


# ---------------------------------------------------------------------------
# Resource accounting
# ---------------------------------------------------------------------------


def channel_ends(x: "Val | None | VEnv | Cont | Command") -> Counter[ChannelEnd]:
    """Multiset of channel ends reachable in a value, env, cont, or command."""
    out: Counter[ChannelEnd] = Counter()
    _collect_ends(x, out)
    return out


def _collect_ends(x: object, out: Counter[ChannelEnd]) -> None:
    match x:
        case None | VUnit() | VLabel(_) | Halt():
            pass
        case VChan(end):
            out[end] += 1
        case VPair(a, b):
            _collect_ends(a, out)
            _collect_ends(b, out)
        case VClosure(_, _, env):
            _collect_ends(env, out)
        case tuple():
            for item in x:
                _collect_ends(item, out)
        case Bind(_, env, nxt):
            _collect_ends(env, out)
            _collect_ends(nxt, out)
        case Ready(v, k):
            _collect_ends(v, out)
            _collect_ends(k, out)
        case HaltC(v):
            _collect_ends(v, out)
        case ForkC(t_new, t_cur):
            _collect_ends(t_new, out)
            _collect_ends(t_cur, out)
        case NewC(_, k):
            _collect_ends(k, out)
        case CloseC(ch, k) | WaitC(ch, k) | RecvC(ch, k):
            out[ch] += 1
            _collect_ends(k, out)
        case SelectC(_, ch, k):
            out[ch] += 1
            _collect_ends(k, out)
        case SendC(ch, v, k):
            out[ch] += 1
            _collect_ends(v, out)
            _collect_ends(k, out)
        case BranchC(ch, cases, k):
            out[ch] += 1
            if cases:
                _collect_ends(cases[0].env, out)
            _collect_ends(k, out)
        case _:
            raise AssertionError(x)


def value_digest(v: Val) -> str:
    """Bounded type-and-shape summary of a value for trace records."""
    match v:
        case VUnit():
            return "unit"
        case VPair(a, b):
            return f"pair({value_digest(a)},{value_digest(b)})"
        case VChan(end):
            return f"chan#{end.id}{end.pol.value}"
        case VClosure(lin, _, _):
            return f"closure[{lin.value}]"
        case VLabel(n):
            return f"label:{n}"
    raise AssertionError(v)
