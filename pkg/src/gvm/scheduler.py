"""Cooperative scheduler: channel table, thread pool, stepping, and gas.

`step` scans the pool front to back and performs the first available
action: restarting a Ready thread, retiring a halted one, forking,
allocating a channel, or completing a rendezvous (close/wait, send/recv,
select/branch).  Passive commands (wait, recv, branch, and unmatched
close/send/select) stay pooled in order.  An unproductive full scan is a
detected deadlock.

Effect completions apply their continuation immediately, so each
scheduler step retires one whole effect; only Ready threads produced by
value expressions take an extra restart step.  Nondeterminism lives
entirely in the gas: structured gas rotates the pool before each step,
selecting the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterator

from .machine import (
    BranchC, ChannelEnd, CloseC, Command, ForkC, Halt, HaltC, MachineFault,
    NewC, Polarity, Ready, RecvC, SelectC, SendC, VChan, VPair, VUnit, WaitC,
    apply_cont, channel_ends, decompose, extend, value_digest,
)
from .syntax import (
    Choice, Dir, End, Expr, SessionType, Type, Xmit, dual, pretty_session,
    unfold,
)

if TYPE_CHECKING:
    from .audit import AuditReport


class Avail(Enum):
    BOTH = "Both"
    POS_ONLY = "PosOnly"
    NEG_ONLY = "NegOnly"
    GONE = "Gone"


@dataclass(frozen=True)
class ChannelState:
    """Per-channel record; `sess` is the session of the positive end."""

    id: int
    sess: SessionType
    avail: Avail


@dataclass(frozen=True)
class ChannelTable:
    """Channel states indexed by id; ids increase and are never reused.

    Gone entries are kept as tombstones so closed channels stay
    distinguishable from never-created ones.
    """

    entries: tuple[ChannelState, ...] = ()

    @property
    def next_id(self) -> int:
        return len(self.entries)

    def get(self, cid: int) -> ChannelState:
        return self.entries[cid]

    def allocate(self, sess: SessionType) -> tuple["ChannelTable", int]:
        cid = self.next_id
        return ChannelTable(self.entries + (ChannelState(cid, sess, Avail.BOTH),)), cid

    def with_state(self, cid: int, state: ChannelState) -> "ChannelTable":
        entries = self.entries[:cid] + (state,) + self.entries[cid + 1 :]
        return ChannelTable(entries)


ThreadPool = tuple[Command, ...]


# ---------------------------------------------------------------------------
# Events, reductions, gas, traces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Terminated:
    pass


@dataclass(frozen=True)
class Stuck:
    pass


@dataclass(frozen=True)
class OutOfGasEvent:
    pass


@dataclass(frozen=True)
class Restarted:
    thread: int


@dataclass(frozen=True)
class Halted:
    thread: int


@dataclass(frozen=True)
class Forked:
    pass


@dataclass(frozen=True)
class NewChannel:
    channel: int


@dataclass(frozen=True)
class Closed:
    channel: int


@dataclass(frozen=True)
class Transmitted:
    channel: int
    payload: str


@dataclass(frozen=True)
class Selected:
    channel: int
    label: int


Event = (
    Terminated | Stuck | OutOfGasEvent | Restarted | Halted | Forked
    | NewChannel | Closed | Transmitted | Selected
)


class RedKind(Enum):
    END = "RedEnd"
    TRANSMIT = "RedTransmit"


@dataclass(frozen=True)
class RedIdent:
    pass


@dataclass(frozen=True)
class RedNew:
    channel: int
    sess: SessionType


@dataclass(frozen=True)
class RedInternal:
    channel: int
    kind: RedKind


Reduction = RedIdent | RedNew | RedInternal


@dataclass(frozen=True)
class Plain:
    steps: int


@dataclass(frozen=True)
class Structured:
    rotations: tuple[int, ...]


Gas = Plain | Structured


def gas_rotations(gas: Gas) -> Iterator[int]:
    match gas:
        case Plain(n):
            return iter((0,) * n)
        case Structured(rotations):
            return iter(rotations)
    raise AssertionError(gas)


class Outcome(Enum):
    TERMINATED = "Terminated"
    STUCK = "Stuck"
    OUT_OF_GAS = "OutOfGas"


@dataclass(frozen=True)
class TraceEntry:
    step: int
    rotation: int
    event: Event
    reduction: Reduction
    pool_size: int
    channels: tuple[ChannelState, ...]
    audit: "AuditReport | None" = None


Trace = list[TraceEntry]


class AuditFailure(Exception):
    def __init__(self, step: int, report: "AuditReport"):
        self.step = step
        self.report = report
        super().__init__(f"audit failed at step {step}: {report}")


# ---------------------------------------------------------------------------
# Matching
# ---------------------------------------------------------------------------


def vcr_match(a: ChannelEnd, b: ChannelEnd) -> bool:
    """True iff the ends are the two ends of one channel."""
    return a.id == b.id and a.pol is not b.pol


def end_session(table: ChannelTable, end: ChannelEnd) -> SessionType:
    state = table.get(end.id)
    return state.sess if end.pol is Polarity.POS else dual(state.sess)


def vcr_match_sr(
    table: ChannelTable, a: ChannelEnd, b: ChannelEnd
) -> tuple[Type, SessionType] | None:
    """Match sender end `a` against receiver end `b`.

    Returns the declared payload type and the sender's continuation
    session.  Matched ends whose session is not send-ready are a fidelity
    violation, impossible for typechecked programs.
    """
    if not vcr_match(a, b):
        return None
    head = unfold(end_session(table, a))
    if isinstance(head, Xmit) and head.dir is Dir.SND:
        return head.payload, head.cont
    raise MachineFault(
        f"channel {a.id} matched for transmission but its session is not send-ready"
    )


def _step_table_xmit(table: ChannelTable, cid: int) -> ChannelTable:
    state = table.get(cid)
    head = unfold(state.sess)
    if not isinstance(head, Xmit):
        raise MachineFault(f"channel {cid} table session is not a transmission")
    return table.with_state(cid, replace(state, sess=head.cont))


def _step_table_choice(table: ChannelTable, cid: int, label: int) -> ChannelTable:
    state = table.get(cid)
    head = unfold(state.sess)
    if not isinstance(head, Choice) or label >= len(head.alts):
        raise MachineFault(f"channel {cid} table session cannot take label {label}")
    return table.with_state(cid, replace(state, sess=head.alts[label]))


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def start(e: Expr) -> tuple[ChannelTable, ThreadPool]:
    """Load a typechecked unit program as a one-thread pool."""
    return ChannelTable(), (decompose(e, (), Halt()),)


def _find_partner(
    pool: ThreadPool, skip: int, want: type, end: ChannelEnd
) -> int | None:
    for j, cmd in enumerate(pool):
        if j == skip or not isinstance(cmd, want):
            continue
        if vcr_match(end, cmd.ch):
            return j
    return None


def step(
    table: ChannelTable, pool: ThreadPool
) -> tuple[Event, Reduction, ChannelTable, ThreadPool]:
    """Perform one action on the first actionable command, scanning in order."""
    from . import audit as audit_mod

    for i, cmd in enumerate(pool):
        match cmd:
            case Ready(v, k):
                moved = pool[:i] + pool[i + 1 :] + (apply_cont(k, v),)
                return Restarted(i), RedIdent(), table, moved

            case HaltC(v):
                if channel_ends(v):
                    raise MachineFault("halted thread still holds channel ends")
                return Halted(i), RedIdent(), table, pool[:i] + pool[i + 1 :]

            case ForkC(thunk_new, thunk_cur):
                parent = apply_cont(thunk_cur, VUnit())
                child = apply_cont(thunk_new, VUnit())
                return Forked(), RedIdent(), table, pool[:i] + (parent, child) + pool[i + 1 :]

            case NewC(sess, k):
                table2, cid = table.allocate(sess)
                ends = VPair(
                    VChan(ChannelEnd(cid, Polarity.POS)),
                    VChan(ChannelEnd(cid, Polarity.NEG)),
                )
                thread = apply_cont(k, ends)
                return (
                    NewChannel(cid),
                    RedNew(cid, sess),
                    table2,
                    pool[:i] + (thread,) + pool[i + 1 :],
                )

            case CloseC(ch, k):
                j = _find_partner(pool, i, WaitC, ch)
                if j is None:
                    continue
                waiter = pool[j]
                assert isinstance(waiter, WaitC)
                state = table.get(ch.id)
                if not isinstance(unfold(state.sess), End):
                    raise MachineFault(f"closing channel {ch.id} whose session is not an end")
                table2 = table.with_state(ch.id, replace(state, avail=Avail.GONE))
                out = list(pool)
                out[i] = apply_cont(k, VUnit())
                out[j] = apply_cont(waiter.k, VUnit())
                return Closed(ch.id), RedInternal(ch.id, RedKind.END), table2, tuple(out)

            case SendC(ch, v, k):
                j = _find_partner(pool, i, RecvC, ch)
                if j is None:
                    continue
                receiver = pool[j]
                assert isinstance(receiver, RecvC)
                matched = vcr_match_sr(table, ch, receiver.ch)
                assert matched is not None
                declared, _ = matched
                fidelity = audit_mod.check_transmission(table, ch, v, declared)
                if not fidelity.ok:
                    raise MachineFault(f"transmission fidelity violated: {fidelity}")
                table2 = _step_table_xmit(table, ch.id)
                out = list(pool)
                out[i] = apply_cont(k, VChan(ch))
                out[j] = apply_cont(receiver.k, VPair(VChan(receiver.ch), v))
                return (
                    Transmitted(ch.id, value_digest(v)),
                    RedInternal(ch.id, RedKind.TRANSMIT),
                    table2,
                    tuple(out),
                )

            case SelectC(label, ch, k):
                j = _find_partner(pool, i, BranchC, ch)
                if j is None:
                    continue
                brancher = pool[j]
                assert isinstance(brancher, BranchC)
                if label >= len(brancher.cases):
                    raise MachineFault(f"selected label {label} beyond the branch arity")
                table2 = _step_table_choice(table, ch.id, label)
                case = brancher.cases[label]
                out = list(pool)
                out[i] = apply_cont(k, VChan(ch))
                out[j] = decompose(
                    case.body, extend(case.env, VChan(brancher.ch)), brancher.k
                )
                return (
                    Selected(ch.id, label),
                    RedInternal(ch.id, RedKind.TRANSMIT),
                    table2,
                    tuple(out),
                )

            case WaitC(_, _) | RecvC(_, _) | BranchC(_, _, _):
                continue

    if not pool:
        return Terminated(), RedIdent(), table, pool
    return Stuck(), RedIdent(), table, pool


# ---------------------------------------------------------------------------
# The gas loop
# ---------------------------------------------------------------------------


def rotate(pool: ThreadPool, r: int) -> ThreadPool:
    if len(pool) < 2:
        return pool
    r %= len(pool)
    return pool[r:] + pool[:r]


def schedule(
    gas: Gas,
    table: ChannelTable,
    pool: ThreadPool,
    audit: bool = False,
) -> tuple[Outcome, Trace]:
    """Drive `step` under the gas supply, recording one trace entry per step."""
    from . import audit as audit_mod

    trace: Trace = []
    for step_no, r in enumerate(gas_rotations(gas)):
        pool = rotate(pool, r)
        before = table
        event, reduction, table, pool = step(table, pool)
        report = None
        if audit:
            if not audit_mod.validate_reduction(before, event, reduction, table):
                bad = audit_mod.AuditReport(
                    ok=False,
                    violations=(
                        audit_mod.Violation(
                            audit_mod.ViolationKind.BAD_REDUCTION,
                            f"{type(event).__name__} with {reduction}",
                        ),
                    ),
                )
                raise AuditFailure(step_no, bad)
            report = audit_mod.audit_state(table, pool)
            if not report.ok:
                raise AuditFailure(step_no, report)
        trace.append(
            TraceEntry(step_no, r, event, reduction, len(pool), table.entries, report)
        )
        if isinstance(event, Terminated):
            return Outcome.TERMINATED, trace
        if isinstance(event, Stuck):
            return Outcome.STUCK, trace
    return Outcome.OUT_OF_GAS, trace


def run(e: Expr, gas: Gas, audit: bool = False) -> tuple[Outcome, Trace]:
    """start + schedule; the program must typecheck at unit beforehand."""
    table, pool = start(e)
    return schedule(gas, table, pool, audit=audit)


# ---------------------------------------------------------------------------
# Trace serialization (stable field names)
# ---------------------------------------------------------------------------


def event_dict(event: Event) -> dict:
    match event:
        case Terminated():
            return {"kind": "Terminated"}
        case Stuck():
            return {"kind": "Stuck"}
        case OutOfGasEvent():
            return {"kind": "OutOfGas"}
        case Restarted(ix):
            return {"kind": "Restarted", "thread": ix}
        case Halted(ix):
            return {"kind": "Halted", "thread": ix}
        case Forked():
            return {"kind": "Forked"}
        case NewChannel(cid):
            return {"kind": "NewChannel", "channel": cid}
        case Closed(cid):
            return {"kind": "Closed", "channel": cid}
        case Transmitted(cid, payload):
            return {"kind": "Transmitted", "channel": cid, "payload": payload}
        case Selected(cid, label):
            return {"kind": "Selected", "channel": cid, "label": label}
    raise AssertionError(event)


def reduction_dict(reduction: Reduction) -> dict:
    match reduction:
        case RedIdent():
            return {"kind": "RedIdent"}
        case RedNew(cid, sess):
            return {"kind": "RedNew", "channel": cid, "sess": pretty_session(sess)}
        case RedInternal(cid, kind):
            return {"kind": "RedInternal", "channel": cid, "internal": kind.value}
    raise AssertionError(reduction)


def trace_record(entry: TraceEntry) -> dict:
    from . import audit as audit_mod

    record = {
        "step": entry.step,
        "rotation": entry.rotation,
        "event": event_dict(entry.event),
        "reduction": reduction_dict(entry.reduction),
        "pool_size": entry.pool_size,
        "channels": [
            {"id": st.id, "avail": st.avail.value, "sess": pretty_session(st.sess)}
            for st in entry.channels
        ],
    }
    if entry.audit is not None:
        record["audit"] = audit_mod.report_dict(entry.audit)
    return record
