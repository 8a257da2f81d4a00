"""Types, session types, and the ANF expression language.

The surface syntax is s-expressions.  Parsing resolves all names to de
Bruijn indices (index 0 is the innermost binding), checks that session
types are closed and contractive, and rejects non-ANF nesting.  Recursive
sessions are finite mu-terms read equi-recursively: `unfold` exposes a
transmission, end, or choice head and always terminates on contractive
input.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

SrcPos = tuple[int, int]  # (line, column), 1-based


class ParseError(Exception):
    """Malformed surface syntax."""

    def __init__(self, pos: SrcPos | None, message: str):
        self.pos = pos
        self.message = message
        where = f"{pos[0]}:{pos[1]}: " if pos else ""
        super().__init__(where + message)


class UnboundName(ParseError):
    """Reference to a name that is not in scope."""


class NonANF(ParseError):
    """An operator position that requires a variable got a compound expression."""


# ---------------------------------------------------------------------------
# Session types and value types
# ---------------------------------------------------------------------------


class Dir(Enum):
    SND = "!"
    RCV = "?"


def flip_dir(d: Dir) -> Dir:
    return Dir.RCV if d is Dir.SND else Dir.SND


@dataclass(frozen=True)
class Xmit:
    """Transmit a payload in direction `dir`, then continue at `cont`."""

    dir: Dir
    payload: "Type"
    cont: "SessionType"


@dataclass(frozen=True)
class End:
    dir: Dir


@dataclass(frozen=True)
class Choice:
    """m-ary choice; SND offers (internal), RCV accepts (external)."""

    dir: Dir
    alts: tuple["SessionType", ...]


@dataclass(frozen=True)
class Mu:
    """Recursive session; binds one variable, de Bruijn style."""

    body: "SessionType"


@dataclass(frozen=True)
class SVar:
    index: int


SessionType = Xmit | End | Choice | Mu | SVar


class Linearity(Enum):
    LL = "lin"
    UU = "unr"


@dataclass(frozen=True)
class Unit:
    pass


@dataclass(frozen=True)
class Pair:
    fst: "Type"
    snd: "Type"


@dataclass(frozen=True)
class Chan:
    sess: SessionType


@dataclass(frozen=True)
class Fun:
    lin: Linearity
    arg: "Type"
    res: "Type"


Type = Unit | Pair | Chan | Fun

UNIT = Unit()


# ---------------------------------------------------------------------------
# Expressions (A-normal form, de Bruijn indexed)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExprNode:
    """Common base carrying an optional source position.

    The position never participates in equality or hashing, so machine
    states built from parsed programs compare structurally.
    """

    pos: SrcPos | None = field(default=None, kw_only=True, compare=False, repr=False)


@dataclass(frozen=True)
class Var(ExprNode):
    index: int


@dataclass(frozen=True)
class UnitE(ExprNode):
    pass


@dataclass(frozen=True)
class PairE(ExprNode):
    fst_ix: int
    snd_ix: int


@dataclass(frozen=True)
class LetPair(ExprNode):
    """Destructure the pair at `pair_ix`; binds fst at index 1, snd at index 0."""

    pair_ix: int
    body: "Expr"


@dataclass(frozen=True)
class LetBind(ExprNode):
    bound: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class Fork(ExprNode):
    body: "Expr"


@dataclass(frozen=True)
class New(ExprNode):
    sess: SessionType


@dataclass(frozen=True)
class Close(ExprNode):
    chan_ix: int


@dataclass(frozen=True)
class Wait(ExprNode):
    chan_ix: int


@dataclass(frozen=True)
class Send(ExprNode):
    chan_ix: int
    val_ix: int


@dataclass(frozen=True)
class Recv(ExprNode):
    chan_ix: int


@dataclass(frozen=True)
class Select(ExprNode):
    label: int
    chan_ix: int


@dataclass(frozen=True)
class Branch(ExprNode):
    """Each case binds its continuation channel at index 0."""

    chan_ix: int
    cases: tuple["Expr", ...]


@dataclass(frozen=True)
class LLambda(ExprNode):
    """Linear-use function; binds the parameter at index 0."""

    param: Type
    body: "Expr"


@dataclass(frozen=True)
class Rec(ExprNode):
    """Recursive function of unrestricted type `fun_type`.

    The body binds the parameter at index 0 and the function itself at
    index 1.
    """

    fun_type: Type
    body: "Expr"


@dataclass(frozen=True)
class App(ExprNode):
    fun_ix: int
    arg_ix: int


@dataclass(frozen=True)
class Subsume(ExprNode):
    val_ix: int
    target: Type


Expr = (
    Var | UnitE | PairE | LetPair | LetBind | Fork | New | Close | Wait
    | Send | Recv | Select | Branch | LLambda | Rec | App | Subsume
)


# ---------------------------------------------------------------------------
# Operations on session types
# ---------------------------------------------------------------------------


def dual(s: SessionType) -> SessionType:
    """The protocol on the other end: every direction flipped."""
    match s:
        case Xmit(d, t, c):
            return Xmit(flip_dir(d), t, dual(c))
        case End(d):
            return End(flip_dir(d))
        case Choice(d, alts):
            return Choice(flip_dir(d), tuple(dual(a) for a in alts))
        case Mu(b):
            return Mu(dual(b))
        case SVar(_):
            return s
    raise AssertionError(s)


def _subst_sess(s: SessionType, depth: int, repl: SessionType) -> SessionType:
    match s:
        case SVar(k):
            if k == depth:
                return repl
            return SVar(k - 1) if k > depth else s
        case Mu(b):
            return Mu(_subst_sess(b, depth + 1, repl))
        case Xmit(d, t, c):
            return Xmit(d, _subst_type(t, depth, repl), _subst_sess(c, depth, repl))
        case Choice(d, alts):
            return Choice(d, tuple(_subst_sess(a, depth, repl) for a in alts))
        case End(_):
            return s
    raise AssertionError(s)


def _subst_type(t: Type, depth: int, repl: SessionType) -> Type:
    match t:
        case Unit():
            return t
        case Pair(a, b):
            return Pair(_subst_type(a, depth, repl), _subst_type(b, depth, repl))
        case Chan(s):
            return Chan(_subst_sess(s, depth, repl))
        case Fun(lin, a, r):
            return Fun(lin, _subst_type(a, depth, repl), _subst_type(r, depth, repl))
    raise AssertionError(t)


def unfold(s: SessionType) -> SessionType:
    """Unroll leading mu binders until the head is Xmit, End, or Choice.

    Contractivity bounds the number of unroll steps by the mu-nesting
    depth, so this always terminates on parser-accepted sessions.
    """
    while isinstance(s, Mu):
        s = _subst_sess(s.body, 0, s)
    return s


def is_unrestricted(t: Type) -> bool:
    """True when values of `t` may be dropped or duplicated."""
    match t:
        case Unit():
            return True
        case Pair(a, b):
            return is_unrestricted(a) and is_unrestricted(b)
        case Chan(_):
            return False
        case Fun(lin, _, _):
            return lin is Linearity.UU
    raise AssertionError(t)


def session_closed(s: SessionType, depth: int = 0) -> bool:
    match s:
        case SVar(k):
            return k < depth
        case Mu(b):
            return session_closed(b, depth + 1)
        case Xmit(_, t, c):
            return _type_closed(t, depth) and session_closed(c, depth)
        case Choice(_, alts):
            return all(session_closed(a, depth) for a in alts)
        case End(_):
            return True
    raise AssertionError(s)


def _type_closed(t: Type, depth: int) -> bool:
    match t:
        case Unit():
            return True
        case Pair(a, b):
            return _type_closed(a, depth) and _type_closed(b, depth)
        case Chan(s):
            return session_closed(s, depth)
        case Fun(_, a, r):
            return _type_closed(a, depth) and _type_closed(r, depth)
    raise AssertionError(t)


def session_contractive(s: SessionType, unguarded: frozenset[int] = frozenset()) -> bool:
    """Every mu body meets a transmission, end, or choice before its variable."""
    match s:
        case SVar(k):
            return k not in unguarded
        case Mu(b):
            return session_contractive(b, frozenset(k + 1 for k in unguarded) | {0})
        case Xmit(_, t, c):
            return _type_contractive(t) and session_contractive(c, frozenset())
        case Choice(_, alts):
            return all(session_contractive(a, frozenset()) for a in alts)
        case End(_):
            return True
    raise AssertionError(s)


def _type_contractive(t: Type) -> bool:
    match t:
        case Unit():
            return True
        case Pair(a, b):
            return _type_contractive(a) and _type_contractive(b)
        case Chan(s):
            return session_contractive(s, frozenset())
        case Fun(_, a, r):
            return _type_contractive(a) and _type_contractive(r)
    raise AssertionError(t)


# ---------------------------------------------------------------------------
# Expression utilities
# ---------------------------------------------------------------------------


def free_vars(e: Expr) -> frozenset[int]:
    """Indices free in `e`, relative to its own context."""
    out: set[int] = set()
    _collect_free(e, 0, out)
    return frozenset(out)


def _collect_free(e: Expr, depth: int, out: set[int]) -> None:
    def ref(k: int) -> None:
        if k >= depth:
            out.add(k - depth)

    match e:
        case Var(k):
            ref(k)
        case UnitE() | New(_):
            pass
        case PairE(a, b) | Send(a, b) | App(a, b):
            ref(a)
            ref(b)
        case Close(k) | Wait(k) | Recv(k) | Subsume(k, _):
            ref(k)
        case Select(_, k):
            ref(k)
        case LetPair(k, body):
            ref(k)
            _collect_free(body, depth + 2, out)
        case LetBind(e1, e2):
            _collect_free(e1, depth, out)
            _collect_free(e2, depth + 1, out)
        case Fork(b):
            _collect_free(b, depth, out)
        case Branch(k, cases):
            ref(k)
            for c in cases:
                _collect_free(c, depth + 1, out)
        case LLambda(_, b):
            _collect_free(b, depth + 1, out)
        case Rec(_, b):
            _collect_free(b, depth + 2, out)
        case _:
            raise AssertionError(e)


def shift_expr(e: Expr, amount: int, depth: int = 0) -> Expr:
    """Shift free indices >= depth up by `amount`."""

    def ix(k: int) -> int:
        return k + amount if k >= depth else k

    match e:
        case Var(k):
            return Var(ix(k), pos=e.pos)
        case UnitE() | New(_):
            return e
        case PairE(a, b):
            return PairE(ix(a), ix(b), pos=e.pos)
        case Send(a, b):
            return Send(ix(a), ix(b), pos=e.pos)
        case App(a, b):
            return App(ix(a), ix(b), pos=e.pos)
        case Close(k):
            return Close(ix(k), pos=e.pos)
        case Wait(k):
            return Wait(ix(k), pos=e.pos)
        case Recv(k):
            return Recv(ix(k), pos=e.pos)
        case Subsume(k, t):
            return Subsume(ix(k), t, pos=e.pos)
        case Select(lab, k):
            return Select(lab, ix(k), pos=e.pos)
        case LetPair(k, body):
            return LetPair(ix(k), shift_expr(body, amount, depth + 2), pos=e.pos)
        case LetBind(e1, e2):
            return LetBind(shift_expr(e1, amount, depth), shift_expr(e2, amount, depth + 1), pos=e.pos)
        case Fork(b):
            return Fork(shift_expr(b, amount, depth), pos=e.pos)
        case Branch(k, cases):
            return Branch(ix(k), tuple(shift_expr(c, amount, depth + 1) for c in cases), pos=e.pos)
        case LLambda(t, b):
            return LLambda(t, shift_expr(b, amount, depth + 1), pos=e.pos)
        case Rec(t, b):
            return Rec(t, shift_expr(b, amount, depth + 2), pos=e.pos)
    raise AssertionError(e)


# ---------------------------------------------------------------------------
# Tokenizer and reader
# ---------------------------------------------------------------------------

_IDENT_RE = re.compile(r"[A-Za-z_%][A-Za-z0-9_'!?*-]*\Z")
_NAT_RE = re.compile(r"[0-9]+\Z")

RESERVED = frozenset(
    {
        "unit", "pair", "chan", "fun", "lin", "unr", "end!", "end?",
        "send", "recv", "sel", "brn", "mu", "let", "letpair", "fork",
        "new", "close", "wait", "select", "branch", "lambda", "rec",
        "app", "subsume", "anew", "asend", "arecv",
    }
)


@dataclass(frozen=True)
class _Atom:
    text: str
    pos: SrcPos


@dataclass(frozen=True)
class _SList:
    items: tuple["_SExpr", ...]
    pos: SrcPos


@dataclass(frozen=True)
class _Splice:
    """A pre-built SessionType or Type spliced into a macro fragment."""

    value: object
    pos: SrcPos


_SExpr = _Atom | _SList | _Splice


def _tokenize(text: str) -> list[tuple[str, SrcPos]]:
    toks: list[tuple[str, SrcPos]] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            toks.append((ch, (line, col)))
            col += 1
            i += 1
        else:
            start = i
            pos = (line, col)
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tok = text[start:i]
            if tok.startswith("%"):
                # '%' names are reserved for internal macro expansion.
                raise ParseError(pos, f"'{tok}': names starting with '%' are reserved")
            toks.append((tok, pos))
    return toks


def _read(toks: list[tuple[str, SrcPos]], i: int) -> tuple[_SExpr, int]:
    if i >= len(toks):
        raise ParseError(toks[-1][1] if toks else (1, 1), "unexpected end of input")
    tok, pos = toks[i]
    if tok == "(":
        items: list[_SExpr] = []
        i += 1
        while True:
            if i >= len(toks):
                raise ParseError(pos, "unclosed parenthesis")
            if toks[i][0] == ")":
                return _SList(tuple(items), pos), i + 1
            item, i = _read(toks, i)
            items.append(item)
    if tok == ")":
        raise ParseError(pos, "unexpected ')'")
    return _Atom(tok, pos), i + 1


def _read_program(text: str) -> _SExpr:
    toks = _tokenize(text)
    if not toks:
        raise ParseError((1, 1), "empty input")
    sx, i = _read(toks, 0)
    if i != len(toks):
        raise ParseError(toks[i][1], "trailing input after program")
    return sx


# ---------------------------------------------------------------------------
# Resolution: surface syntax to core terms
# ---------------------------------------------------------------------------


def _head(sx: _SList) -> str:
    if not sx.items or not isinstance(sx.items[0], _Atom):
        raise ParseError(sx.pos, "expected an operator after '('")
    return sx.items[0].text


def _expect_arity(sx: _SList, n: int, form: str) -> None:
    if len(sx.items) != n + 1:
        raise ParseError(sx.pos, f"'{form}' takes {n} arguments, got {len(sx.items) - 1}")


def _binder_name(sx: _SExpr) -> str:
    if not isinstance(sx, _Atom):
        raise ParseError(_pos_of(sx), "expected a name to bind")
    if sx.text in RESERVED or _NAT_RE.match(sx.text) or not _IDENT_RE.match(sx.text):
        raise ParseError(sx.pos, f"'{sx.text}' cannot be used as a name")
    return sx.text


def _pos_of(sx: _SExpr) -> SrcPos:
    return sx.pos


def parse_session_sx(sx: _SExpr, mu_scope: tuple[str, ...] = ()) -> SessionType:
    if isinstance(sx, _Splice):
        if not isinstance(sx.value, SessionType):
            raise ParseError(sx.pos, "expected a session type here")
        return sx.value
    if isinstance(sx, _Atom):
        if sx.text == "end!":
            return End(Dir.SND)
        if sx.text == "end?":
            return End(Dir.RCV)
        if sx.text in mu_scope:
            return SVar(mu_scope.index(sx.text))
        if sx.text in RESERVED or _NAT_RE.match(sx.text):
            raise ParseError(sx.pos, f"expected a session type, got '{sx.text}'")
        raise UnboundName(sx.pos, f"unbound session variable '{sx.text}'")
    head = _head(sx)
    if head in ("send", "recv"):
        _expect_arity(sx, 2, head)
        d = Dir.SND if head == "send" else Dir.RCV
        return Xmit(d, parse_type_sx(sx.items[1], mu_scope), parse_session_sx(sx.items[2], mu_scope))
    if head in ("sel", "brn"):
        if len(sx.items) < 2:
            raise ParseError(sx.pos, f"'{head}' needs at least one alternative")
        d = Dir.SND if head == "sel" else Dir.RCV
        return Choice(d, tuple(parse_session_sx(a, mu_scope) for a in sx.items[1:]))
    if head == "mu":
        _expect_arity(sx, 2, "mu")
        name = _binder_name(sx.items[1])
        return Mu(parse_session_sx(sx.items[2], (name,) + mu_scope))
    raise ParseError(sx.pos, f"unknown session form '{head}'")


def parse_type_sx(sx: _SExpr, mu_scope: tuple[str, ...] = ()) -> Type:
    if isinstance(sx, _Splice):
        if isinstance(sx.value, SessionType):
            return Chan(sx.value)
        if not isinstance(sx.value, Type):
            raise ParseError(sx.pos, "expected a type here")
        return sx.value
    if isinstance(sx, _Atom):
        if sx.text == "unit":
            return UNIT
        raise ParseError(sx.pos, f"expected a type, got '{sx.text}'")
    head = _head(sx)
    if head == "pair":
        _expect_arity(sx, 2, "pair")
        return Pair(parse_type_sx(sx.items[1], mu_scope), parse_type_sx(sx.items[2], mu_scope))
    if head == "chan":
        _expect_arity(sx, 1, "chan")
        return Chan(parse_session_sx(sx.items[1], mu_scope))
    if head == "fun":
        _expect_arity(sx, 3, "fun")
        lin_sx = sx.items[1]
        if not isinstance(lin_sx, _Atom) or lin_sx.text not in ("lin", "unr"):
            raise ParseError(_pos_of(lin_sx), "function type needs 'lin' or 'unr'")
        lin = Linearity.LL if lin_sx.text == "lin" else Linearity.UU
        return Fun(lin, parse_type_sx(sx.items[2], mu_scope), parse_type_sx(sx.items[3], mu_scope))
    raise ParseError(sx.pos, f"unknown type form '{head}'")


def _checked_session(sx: _SExpr) -> SessionType:
    s = parse_session_sx(sx)
    if not session_closed(s):
        raise ParseError(_pos_of(sx), "session type has an unbound recursion variable")
    if not session_contractive(s):
        raise ParseError(_pos_of(sx), "session type is not contractive")
    return s


def _checked_type(sx: _SExpr) -> Type:
    t = parse_type_sx(sx)
    if not _type_closed(t, 0):
        raise ParseError(_pos_of(sx), "type has an unbound recursion variable")
    if not _type_contractive(t):
        raise ParseError(_pos_of(sx), "type contains a non-contractive session")
    return t


def _var_index(sx: _SExpr, scope: tuple[str, ...], form: str) -> int:
    if isinstance(sx, _SList):
        raise NonANF(sx.pos, f"'{form}' takes a variable, not a compound expression")
    if isinstance(sx, _Splice):
        raise ParseError(sx.pos, f"'{form}' takes a variable")
    if sx.text in RESERVED or _NAT_RE.match(sx.text):
        raise ParseError(sx.pos, f"'{form}' takes a variable, got '{sx.text}'")
    if sx.text not in scope:
        raise UnboundName(sx.pos, f"unbound variable '{sx.text}'")
    return scope.index(sx.text)


def _nat(sx: _SExpr, form: str) -> int:
    if not isinstance(sx, _Atom) or not _NAT_RE.match(sx.text):
        raise ParseError(_pos_of(sx), f"'{form}' takes a numeric label")
    return int(sx.text)


def parse_expr_sx(sx: _SExpr, scope: tuple[str, ...]) -> Expr:
    if isinstance(sx, _Splice):
        raise ParseError(sx.pos, "expected an expression")
    if isinstance(sx, _Atom):
        if sx.text == "unit":
            return UnitE(pos=sx.pos)
        if sx.text in RESERVED or _NAT_RE.match(sx.text):
            raise ParseError(sx.pos, f"expected an expression, got '{sx.text}'")
        if sx.text not in scope:
            raise UnboundName(sx.pos, f"unbound variable '{sx.text}'")
        return Var(scope.index(sx.text), pos=sx.pos)

    head = _head(sx)
    pos = sx.pos
    if head == "pair":
        _expect_arity(sx, 2, "pair")
        return PairE(_var_index(sx.items[1], scope, "pair"), _var_index(sx.items[2], scope, "pair"), pos=pos)
    if head == "let":
        _expect_arity(sx, 3, "let")
        name = _binder_name(sx.items[1])
        bound = parse_expr_sx(sx.items[2], scope)
        body = parse_expr_sx(sx.items[3], (name,) + scope)
        return LetBind(bound, body, pos=pos)
    if head == "letpair":
        _expect_arity(sx, 4, "letpair")
        fst_name = _binder_name(sx.items[1])
        snd_name = _binder_name(sx.items[2])
        pair_ix = _var_index(sx.items[3], scope, "letpair")
        body = parse_expr_sx(sx.items[4], (snd_name, fst_name) + scope)
        return LetPair(pair_ix, body, pos=pos)
    if head == "fork":
        _expect_arity(sx, 1, "fork")
        return Fork(parse_expr_sx(sx.items[1], scope), pos=pos)
    if head == "new":
        _expect_arity(sx, 1, "new")
        return New(_checked_session(sx.items[1]), pos=pos)
    if head == "close":
        _expect_arity(sx, 1, "close")
        return Close(_var_index(sx.items[1], scope, "close"), pos=pos)
    if head == "wait":
        _expect_arity(sx, 1, "wait")
        return Wait(_var_index(sx.items[1], scope, "wait"), pos=pos)
    if head == "send":
        _expect_arity(sx, 2, "send")
        return Send(
            _var_index(sx.items[1], scope, "send"),
            _var_index(sx.items[2], scope, "send"),
            pos=pos,
        )
    if head == "recv":
        _expect_arity(sx, 1, "recv")
        return Recv(_var_index(sx.items[1], scope, "recv"), pos=pos)
    if head == "select":
        _expect_arity(sx, 2, "select")
        return Select(_nat(sx.items[1], "select"), _var_index(sx.items[2], scope, "select"), pos=pos)
    if head == "branch":
        _expect_arity(sx, 2, "branch")
        subject_sx = sx.items[1]
        chan_ix = _var_index(subject_sx, scope, "branch")
        cases_sx = sx.items[2]
        if not isinstance(cases_sx, _SList) or not cases_sx.items:
            raise ParseError(_pos_of(cases_sx), "branch needs a parenthesized list of cases")
        # The subject name is rebound in each case to the continuation channel.
        assert isinstance(subject_sx, _Atom)
        case_scope = (subject_sx.text,) + scope
        cases = tuple(parse_expr_sx(c, case_scope) for c in cases_sx.items)
        return Branch(chan_ix, cases, pos=pos)
    if head == "lambda":
        _expect_arity(sx, 3, "lambda")
        name = _binder_name(sx.items[1])
        param = _checked_type(sx.items[2])
        body = parse_expr_sx(sx.items[3], (name,) + scope)
        return LLambda(param, body, pos=pos)
    if head == "rec":
        _expect_arity(sx, 4, "rec")
        fun_name = _binder_name(sx.items[1])
        arg_name = _binder_name(sx.items[2])
        fun_type = _checked_type(sx.items[3])
        body = parse_expr_sx(sx.items[4], (arg_name, fun_name) + scope)
        return Rec(fun_type, body, pos=pos)
    if head == "app":
        _expect_arity(sx, 2, "app")
        return App(_var_index(sx.items[1], scope, "app"), _var_index(sx.items[2], scope, "app"), pos=pos)
    if head == "subsume":
        _expect_arity(sx, 2, "subsume")
        return Subsume(_var_index(sx.items[1], scope, "subsume"), _checked_type(sx.items[2]), pos=pos)
    if head in ("anew", "asend", "arecv"):
        from . import asynclib  # deferred: asynclib builds on this module

        if head == "anew":
            _expect_arity(sx, 1, "anew")
            fragment = asynclib.anew_fragment(_checked_session(sx.items[1]))
            return parse_expr_sx(_sx_of(fragment, pos), scope)
        if head == "asend":
            _expect_arity(sx, 3, "asend")
            chan_atom = sx.items[1]
            val_atom = sx.items[2]
            _var_index(chan_atom, scope, "asend")
            _var_index(val_atom, scope, "asend")
            assert isinstance(chan_atom, _Atom) and isinstance(val_atom, _Atom)
            fragment = asynclib.asend_fragment(
                chan_atom.text, val_atom.text, _checked_session(sx.items[3])
            )
            return parse_expr_sx(_sx_of(fragment, pos), scope)
        _expect_arity(sx, 2, "arecv")
        chan_atom = sx.items[1]
        _var_index(chan_atom, scope, "arecv")
        assert isinstance(chan_atom, _Atom)
        fragment = asynclib.arecv_fragment(chan_atom.text, _checked_session(sx.items[2]))
        return parse_expr_sx(_sx_of(fragment, pos), scope)
    raise ParseError(pos, f"unknown expression form '{head}'")


def _sx_of(fragment: object, pos: SrcPos) -> _SExpr:
    """Turn a macro fragment (nested lists, names, spliced types) into reader terms."""
    if isinstance(fragment, (list, tuple)):
        return _SList(tuple(_sx_of(item, pos) for item in fragment), pos)
    if isinstance(fragment, str):
        return _Atom(fragment, pos)
    return _Splice(fragment, pos)


def parse_program(text: str) -> Expr:
    """Parse a closed program, resolving every name to a de Bruijn index."""
    return parse_expr_sx(_read_program(text), ())


def parse_session(text: str) -> SessionType:
    return _checked_session(_read_program(text))


def parse_type(text: str) -> Type:
    return _checked_type(_read_program(text))


def resolve_fragment(fragment: object, scope: tuple[str, ...]) -> Expr:
    """Resolve a macro fragment against an explicit scope (innermost first)."""
    return parse_expr_sx(_sx_of(fragment, (0, 0)), scope)


# ---------------------------------------------------------------------------
# Pretty printing (inverse of the parser on resolved terms)
# ---------------------------------------------------------------------------


def pretty_session(s: SessionType, names: tuple[str, ...] = ()) -> str:
    match s:
        case End(Dir.SND):
            return "end!"
        case End(Dir.RCV):
            return "end?"
        case Xmit(d, t, c):
            op = "send" if d is Dir.SND else "recv"
            return f"({op} {pretty_type(t, names)} {pretty_session(c, names)})"
        case Choice(d, alts):
            op = "sel" if d is Dir.SND else "brn"
            inner = " ".join(pretty_session(a, names) for a in alts)
            return f"({op} {inner})"
        case Mu(b):
            name = f"S{len(names)}"
            return f"(mu {name} {pretty_session(b, (name,) + names)})"
        case SVar(k):
            return names[k]
    raise AssertionError(s)


def pretty_type(t: Type, names: tuple[str, ...] = ()) -> str:
    match t:
        case Unit():
            return "unit"
        case Pair(a, b):
            return f"(pair {pretty_type(a, names)} {pretty_type(b, names)})"
        case Chan(s):
            return f"(chan {pretty_session(s, names)})"
        case Fun(lin, a, r):
            return f"(fun {lin.value} {pretty_type(a, names)} {pretty_type(r, names)})"
    raise AssertionError(t)


def pretty_expr(e: Expr, scope: tuple[str, ...] = ()) -> str:
    """Print with generated names; `parse_program(pretty_expr(e)) == e` for
    resolved terms whose branch cases do not reach past the rebound subject."""

    def fresh(k: int = 0) -> str:
        return f"x{len(scope) + k}"

    match e:
        case Var(k):
            return scope[k]
        case UnitE():
            return "unit"
        case PairE(a, b):
            return f"(pair {scope[a]} {scope[b]})"
        case LetBind(e1, e2):
            name = fresh()
            return f"(let {name} {pretty_expr(e1, scope)} {pretty_expr(e2, (name,) + scope)})"
        case LetPair(k, body):
            a, b = fresh(), fresh(1)
            return f"(letpair {a} {b} {scope[k]} {pretty_expr(body, (b, a) + scope)})"
        case Fork(b):
            return f"(fork {pretty_expr(b, scope)})"
        case New(s):
            return f"(new {pretty_session(s)})"
        case Close(k):
            return f"(close {scope[k]})"
        case Wait(k):
            return f"(wait {scope[k]})"
        case Send(a, b):
            return f"(send {scope[a]} {scope[b]})"
        case Recv(k):
            return f"(recv {scope[k]})"
        case Select(lab, k):
            return f"(select {lab} {scope[k]})"
        case Branch(k, cases):
            subject = scope[k]
            inner = " ".join(pretty_expr(c, (subject,) + scope) for c in cases)
            return f"(branch {subject} ({inner}))"
        case LLambda(t, b):
            name = fresh()
            return f"(lambda {name} {pretty_type(t)} {pretty_expr(b, (name,) + scope)})"
        case Rec(t, b):
            f, x = fresh(), fresh(1)
            return f"(rec {f} {x} {pretty_type(t)} {pretty_expr(b, (x, f) + scope)})"
        case App(a, b):
            return f"(app {scope[a]} {scope[b]})"
        case Subsume(k, t):
            return f"(subsume {scope[k]} {pretty_type(t)})"
    raise AssertionError(e)
