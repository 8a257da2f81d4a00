"""Dynamic verification of the resource and protocol invariants.

`audit_state` reconstructs the ownership partition from scratch after a
step: every end advertised by the channel table is held exactly once
across the pool, no end is duplicated or dangling, and halted values hold
nothing.  `validate_reduction` checks that the table evolved by a legal
reduction for the step's event.  `check_transmission` checks rendezvous
fidelity: the matched session must be send-ready and the payload must fit
the declared type.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from enum import Enum

from .machine import (
    BranchC, ChannelEnd, HaltC, Polarity, Val, VChan, VClosure, VPair,
    VUnit, channel_ends,
)
from .scheduler import (
    Avail, ChannelTable, Closed, Event, NewChannel, Reduction, RedIdent,
    RedInternal, RedKind, RedNew, Selected, ThreadPool, Transmitted,
    end_session,
)
from .syntax import Chan, Choice, Dir, End, Fun, Pair, Type, Unit, Xmit, unfold
from .typecheck import sub_session, subtype


class ViolationKind(Enum):
    DUPLICATE_END = "DuplicateEnd"
    DANGLING_END = "DanglingEnd"
    GHOST_END = "GhostEnd"
    MISSING_END = "MissingEnd"
    BAD_REDUCTION = "BadReduction"
    FIDELITY_BREACH = "FidelityBreach"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    detail: str


@dataclass(frozen=True)
class AuditReport:
    ok: bool
    violations: tuple[Violation, ...]

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"{v.kind.value}: {v.detail}" for v in self.violations)


def _report(violations: list[Violation]) -> AuditReport:
    return AuditReport(ok=not violations, violations=tuple(violations))


def report_dict(report: AuditReport) -> dict:
    return {
        "ok": report.ok,
        "violations": [
            {"kind": v.kind.value, "detail": v.detail} for v in report.violations
        ],
    }


def _advertised(avail: Avail) -> tuple[Polarity, ...]:
    match avail:
        case Avail.BOTH:
            return (Polarity.POS, Polarity.NEG)
        case Avail.POS_ONLY:
            return (Polarity.POS,)
        case Avail.NEG_ONLY:
            return (Polarity.NEG,)
        case Avail.GONE:
            return ()
    raise AssertionError(avail)


def audit_state(table: ChannelTable, pool: ThreadPool) -> AuditReport:
    """Check the ownership partition of channel ends across the pool."""
    violations: list[Violation] = []
    total: Counter[ChannelEnd] = Counter()
    for cmd in pool:
        total += channel_ends(cmd)

    for end, count in sorted(total.items(), key=lambda kv: (kv[0].id, kv[0].pol.value)):
        if count > 1:
            violations.append(
                Violation(ViolationKind.DUPLICATE_END, f"end {end.id}{end.pol.value} held {count} times")
            )
        if end.id >= len(table.entries):
            violations.append(
                Violation(ViolationKind.GHOST_END, f"end {end.id}{end.pol.value} has no table entry")
            )
            continue
        if end.pol not in _advertised(table.get(end.id).avail):
            violations.append(
                Violation(
                    ViolationKind.GHOST_END,
                    f"end {end.id}{end.pol.value} is not advertised by the table",
                )
            )

    for state in table.entries:
        for pol in _advertised(state.avail):
            end = ChannelEnd(state.id, pol)
            if total[end] == 0:
                violations.append(
                    Violation(
                        ViolationKind.MISSING_END,
                        f"advertised end {state.id}{pol.value} is held by no thread",
                    )
                )

    for ix, cmd in enumerate(pool):
        if isinstance(cmd, HaltC) and channel_ends(cmd.v):
            violations.append(
                Violation(ViolationKind.DANGLING_END, f"halted thread {ix} holds channel ends")
            )
        if isinstance(cmd, BranchC) and cmd.cases:
            base = channel_ends(cmd.cases[0].env)
            for case in cmd.cases[1:]:
                if channel_ends(case.env) != base:
                    violations.append(
                        Violation(
                            ViolationKind.DANGLING_END,
                            f"thread {ix} branch cases disagree on held ends",
                        )
                    )
                    break

    return _report(violations)


def validate_reduction(
    before: ChannelTable, ev: Event, red: Reduction, after: ChannelTable
) -> bool:
    """Did the table evolve by exactly the claimed reduction for this event?"""
    match red:
        case RedIdent():
            if isinstance(ev, (NewChannel, Closed, Transmitted, Selected)):
                return False
            return before == after

        case RedNew(cid, sess):
            if not isinstance(ev, NewChannel) or ev.channel != cid:
                return False
            if cid != before.next_id or after.next_id != cid + 1:
                return False
            if after.entries[:cid] != before.entries:
                return False
            new = after.get(cid)
            return new.sess == sess and new.avail is Avail.BOTH

        case RedInternal(cid, RedKind.END):
            if not isinstance(ev, Closed) or ev.channel != cid:
                return False
            if cid >= before.next_id or before.next_id != after.next_id:
                return False
            old, new = before.get(cid), after.get(cid)
            if not isinstance(unfold(old.sess), End):
                return False
            if not (old.avail is Avail.BOTH and new.avail is Avail.GONE):
                return False
            if new.sess != old.sess:
                return False
            return _unchanged_except(before, after, cid)

        case RedInternal(cid, RedKind.TRANSMIT):
            if not isinstance(ev, (Transmitted, Selected)) or ev.channel != cid:
                return False
            if cid >= before.next_id or before.next_id != after.next_id:
                return False
            old, new = before.get(cid), after.get(cid)
            if old.avail is not new.avail:
                return False
            head = unfold(old.sess)
            if isinstance(ev, Transmitted):
                stepped = isinstance(head, Xmit) and new.sess == head.cont
            else:
                stepped = (
                    isinstance(head, Choice)
                    and ev.label < len(head.alts)
                    and new.sess == head.alts[ev.label]
                )
            return stepped and _unchanged_except(before, after, cid)

    raise AssertionError(red)


def _unchanged_except(before: ChannelTable, after: ChannelTable, cid: int) -> bool:
    for i, (a, b) in enumerate(zip(before.entries, after.entries)):
        if i != cid and a != b:
            return False
    return True


# ---------------------------------------------------------------------------
# Transmission fidelity
# ---------------------------------------------------------------------------


def _value_fits(table: ChannelTable, v: Val, declared: Type) -> bool:
    """Shape-level check that a runtime value inhabits (a subtype of) a type.

    Closure bodies carry no reconstructed result type, so functions are
    checked by linearity marker only; channels are checked exactly via the
    table session.
    """
    match v, declared:
        case VUnit(), Unit():
            return True
        case VPair(a, b), Pair(ta, tb):
            return _value_fits(table, a, ta) and _value_fits(table, b, tb)
        case VChan(end), Chan(s):
            if end.id >= len(table.entries):
                return False
            return sub_session(end_session(table, end), s)
        case VClosure(lin, _, _), Fun(lin2, _, _):
            return lin is lin2
        case _:
            return False


def check_transmission(
    table: ChannelTable, sender: ChannelEnd, payload: Val, declared: Type
) -> AuditReport:
    """Fidelity at a send/recv rendezvous: dual send-ready sessions and a
    payload fitting the declared type."""
    violations: list[Violation] = []
    if sender.id >= len(table.entries):
        violations.append(
            Violation(ViolationKind.FIDELITY_BREACH, f"channel {sender.id} does not exist")
        )
        return _report(violations)
    if table.get(sender.id).avail is Avail.GONE:
        violations.append(
            Violation(ViolationKind.FIDELITY_BREACH, f"channel {sender.id} is closed")
        )
        return _report(violations)
    head = unfold(end_session(table, sender))
    if not (isinstance(head, Xmit) and head.dir is Dir.SND):
        violations.append(
            Violation(
                ViolationKind.FIDELITY_BREACH,
                f"channel {sender.id} session is not send-ready at the sender end",
            )
        )
        return _report(violations)
    if not subtype(declared, head.payload) and not subtype(head.payload, declared):
        violations.append(
            Violation(
                ViolationKind.FIDELITY_BREACH,
                f"declared payload disagrees with channel {sender.id} session",
            )
        )
    if not _value_fits(table, payload, head.payload):
        violations.append(
            Violation(
                ViolationKind.FIDELITY_BREACH,
                f"payload {type(payload).__name__} does not fit the declared type",
            )
        )
    return _report(violations)
