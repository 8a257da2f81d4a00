"""Asynchronous channels as promises over synchronous channels.

An asynchronous channel for payload session `s` is a promise: a
single-shot synchronous channel delivering the payload channel,
`async_session(s) = ?(chan s).end?`.  Sending never blocks the caller:
`asend` creates the next promise, forks a thread that performs the
blocking receive/send/forward sequence, and returns the new promise
immediately.  Each operation adds one promise link, so repeated sends
build a chain that behaves as an unbounded buffer.

The builders emit plain surface fragments (with already-parsed session
types spliced in) and resolve them to core expressions, so the emitted
code is exactly what a user could have written by hand.  Surface sugar:
`(anew s)`, `(asend ch v s)`, `(arecv ch s)`, where `s` is the payload
channel's current session.
"""

from __future__ import annotations

from .syntax import (
    Chan, Dir, End, Expr, Mu, SessionType, Type, Xmit, dual,
    resolve_fragment, unfold,
)

Fragment = list | str | SessionType


def async_session(s: SessionType) -> SessionType:
    """The promise session carrying a payload channel of session `s`."""
    return Xmit(Dir.RCV, Chan(s), End(Dir.RCV))


def async_type(s: SessionType) -> Type:
    return Chan(async_session(s))


def _payload_session(payload_type: Type, op: str) -> SessionType:
    if not isinstance(payload_type, Chan):
        raise ValueError(f"{op} needs the payload channel type, got {payload_type}")
    return payload_type.sess


def _send_head(s: SessionType, op: str) -> tuple[Type, SessionType]:
    head = unfold(s)
    if not (isinstance(head, Xmit) and head.dir is Dir.SND):
        raise ValueError(f"{op} needs a sending payload session")
    return head.payload, head.cont


def _recv_head(s: SessionType, op: str) -> tuple[Type, SessionType]:
    head = unfold(s)
    if not (isinstance(head, Xmit) and head.dir is Dir.RCV):
        raise ValueError(f"{op} needs a receiving payload session")
    return head.payload, head.cont


def anew_fragment(s: SessionType) -> Fragment:
    """Create the payload channel and a filled promise for each end."""
    return [
        "let", "%c", ["new", s],
        ["letpair", "%pp", "%pn", "%c",
         ["let", "%p1", ["new", async_session(s)],
          ["letpair", "%r1", "%w1", "%p1",
           ["let", "%u1", ["fork", ["let", "%f1", ["send", "%w1", "%pp"], ["close", "%f1"]]],
            ["let", "%p2", ["new", async_session(dual(s))],
             ["letpair", "%r2", "%w2", "%p2",
              ["let", "%u2", ["fork", ["let", "%f2", ["send", "%w2", "%pn"], ["close", "%f2"]]],
               ["pair", "%r1", "%r2"]]]]]]]],
    ]


def asend_fragment(achan: str, value: str, s: SessionType) -> Fragment:
    """Non-blocking send of `value` on the async channel `achan`.

    `s` is the payload channel's current (sending) session.  The forked
    thread receives the payload channel from the old promise, performs
    the send, and fills the new promise with the depleted channel.
    """
    _, cont = _send_head(s, "asend")
    return [
        "let", "%np", ["new", async_session(cont)],
        ["letpair", "%recv", "%send", "%np",
         ["let", "%u", ["fork",
           ["let", "%rp", ["recv", achan],
            ["letpair", "%old", "%schan", "%rp",
             ["let", "%schan2", ["send", "%schan", value],
              ["let", "%send2", ["send", "%send", "%schan2"],
               ["let", "%uu", ["wait", "%old"],
                ["close", "%send2"]]]]]]],
          "%recv"]],
    ]


def arecv_fragment(achan: str, s: SessionType) -> Fragment:
    """Receive a value from the async channel `achan`, yielding the value
    paired with the next promise.

    `s` is the payload channel's current (receiving) session.  Blocks on
    the promise and the payload channel; the promise for the continuation
    is filled by a forked thread.
    """
    _, cont = _recv_head(s, "arecv")
    return [
        "let", "%rp", ["recv", achan],
        ["letpair", "%old", "%schan", "%rp",
         ["let", "%vp", ["recv", "%schan"],
          ["letpair", "%schan2", "%val", "%vp",
           ["let", "%np", ["new", async_session(cont)],
            ["letpair", "%recv", "%send", "%np",
             ["let", "%u", ["fork",
               ["let", "%send2", ["send", "%send", "%schan2"],
                ["let", "%uu", ["wait", "%old"],
                 ["close", "%send2"]]]],
              ["pair", "%val", "%recv"]]]]]]],
    ]


def _scope_for(indices: dict[str, int]) -> tuple[str, ...]:
    width = max(indices.values()) + 1
    names = [f"%slot{i}" for i in range(width)]
    for name, ix in indices.items():
        names[ix] = name
    return tuple(names)


def build_anew(s: SessionType) -> Expr:
    """A closed expression evaluating to a pair of dual async endpoints."""
    return resolve_fragment(anew_fragment(s), ())


def build_asend(achan: int, value: int, payload_type: Type) -> Expr:
    """An expression sending variable `value` on async channel variable
    `achan`; `payload_type` is the payload channel's type, `Chan(s)`."""
    s = _payload_session(payload_type, "asend")
    scope = _scope_for({"%achan*": achan, "%value*": value})
    return resolve_fragment(asend_fragment("%achan*", "%value*", s), scope)


def build_arecv(achan: int, payload_type: Type) -> Expr:
    """An expression receiving from async channel variable `achan`;
    `payload_type` is the payload channel's type, `Chan(s)`."""
    s = _payload_session(payload_type, "arecv")
    scope = _scope_for({"%achan*": achan})
    return resolve_fragment(arecv_fragment("%achan*", s), scope)
