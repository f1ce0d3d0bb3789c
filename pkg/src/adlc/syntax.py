"""Abstract syntax, S-expression parser and printer for the object language.

The expression type is the single currency of every transformation in this
package.  Core forms are real constants, variables, + and * on reals, a
`greater` comparison producing sum-encoded booleans, lambda/application/let,
pairs, sums, mutable references, and the delimited control pair shift/reset.
The sugar forms (if, letrec, seq) are kept distinct so that parsing preserves
the input; `lang.desugar` removes them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class LangError(Exception):
    """Base class for all object-language errors."""


class ParseError(LangError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Expression nodes


@dataclass(frozen=True)
class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unit(Expr):
    pass


@dataclass(frozen=True)
class Add(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Mul(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Greater(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Lam(Expr):
    param: str
    body: Expr


@dataclass(frozen=True)
class App(Expr):
    fn: Expr
    arg: Expr


@dataclass(frozen=True)
class Let(Expr):
    name: str
    bound: Expr
    body: Expr


@dataclass(frozen=True)
class Pair(Expr):
    fst: Expr
    snd: Expr


@dataclass(frozen=True)
class Fst(Expr):
    arg: Expr


@dataclass(frozen=True)
class Snd(Expr):
    arg: Expr


@dataclass(frozen=True)
class Inl(Expr):
    arg: Expr


@dataclass(frozen=True)
class Inr(Expr):
    arg: Expr


@dataclass(frozen=True)
class Case(Expr):
    scrutinee: Expr
    left_name: str
    left_body: Expr
    right_name: str
    right_body: Expr


@dataclass(frozen=True)
class Ref(Expr):
    init: Expr


@dataclass(frozen=True)
class Deref(Expr):
    cell: Expr


@dataclass(frozen=True)
class Assign(Expr):
    cell: Expr
    value: Expr


@dataclass(frozen=True)
class Shift(Expr):
    name: str
    body: Expr


@dataclass(frozen=True)
class Reset(Expr):
    body: Expr


# Sugar forms, removed by lang.desugar.


@dataclass(frozen=True)
class If(Expr):
    guard: Expr
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class Letrec(Expr):
    name: str
    fn: Expr  # must be a Lam
    body: Expr


@dataclass(frozen=True)
class Seq(Expr):
    first: Expr
    second: Expr


# ---------------------------------------------------------------------------
# Traversal helpers

def children(e: Expr) -> list[Expr]:
    return [v for f in e.__dataclass_fields__ if isinstance(v := getattr(e, f), Expr)]


def node_count(e: Expr) -> int:
    """Number of constructors in the tree, leaves included."""
    return 1 + sum(node_count(c) for c in children(e))


def free_vars(e: Expr) -> set[str]:
    match e:
        case Var(name):
            return {name}
        case Const() | Unit():
            return set()
        case Lam(param, body):
            return free_vars(body) - {param}
        case Let(name, bound, body):
            return free_vars(bound) | (free_vars(body) - {name})
        case Letrec(name, fn, body):
            return (free_vars(fn) | free_vars(body)) - {name}
        case Shift(name, body):
            return free_vars(body) - {name}
        case Case(scrutinee, ln, lb, rn, rb):
            return free_vars(scrutinee) | (free_vars(lb) - {ln}) | (free_vars(rb) - {rn})
        case _:
            out: set[str] = set()
            for c in children(e):
                out |= free_vars(c)
            return out


def all_names(e: Expr) -> set[str]:
    """Every identifier occurring in the tree, free or binding.  Fresh-name
    generators must avoid all of them, not just the free ones, or generated
    binders can capture existing ones."""
    out: set[str] = set()

    def go(e: Expr) -> None:
        match e:
            case Var(name):
                out.add(name)
            case Lam(p, b):
                out.add(p)
                go(b)
            case Let(n, b, body):
                out.add(n)
                go(b)
                go(body)
            case Letrec(n, f, body):
                out.add(n)
                go(f)
                go(body)
            case Shift(n, b):
                out.add(n)
                go(b)
            case Case(s, ln, lb, rn, rb):
                out.add(ln)
                out.add(rn)
                go(s)
                go(lb)
                go(rb)
            case _:
                for c in children(e):
                    go(c)

    go(e)
    return out


def contains_control(e: Expr) -> bool:
    """True when the tree holds any shift or reset node."""
    if isinstance(e, (Shift, Reset)):
        return True
    return any(contains_control(c) for c in children(e))


class NameGen:
    """Deterministic fresh-name supply, skipping a set of reserved names."""

    def __init__(self, avoid: set[str] | frozenset[str] = frozenset(), prefix: str = "x"):
        self.avoid = set(avoid)
        self.prefix = prefix
        self.counter = 0

    def fresh(self, prefix: str | None = None) -> str:
        p = prefix or self.prefix
        while True:
            self.counter += 1
            name = f"{p}{self.counter}"
            if name not in self.avoid:
                self.avoid.add(name)
                return name


# ---------------------------------------------------------------------------
# Parsing

IDENT_RE = re.compile(r"[a-zA-Z_][a-zA-Z0-9_'-]*")
FLOAT_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t\r\n]+)
      | (?P<comment>;[^\n]*)
      | (?P<lparen>\()
      | (?P<rparen>\))
      | (?P<float>[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)
      | (?P<ident>[a-zA-Z_][a-zA-Z0-9_'-]*)
      | (?P<op>[+*>])
    """,
    re.VERBOSE,
)


class _Tok:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos, line, col = 0, 1, 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind not in ("ws", "comment"):
            toks.append(_Tok(kind, chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            col = len(chunk) - chunk.rfind("\n")
        else:
            col += len(chunk)
        pos = m.end()
    toks.append(_Tok("eof", "", line, col))
    return toks


class _Parser:
    def __init__(self, toks: list[_Tok]):
        self.toks = toks
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, kind: str) -> _Tok:
        t = self.next()
        if t.kind != kind:
            raise ParseError(f"expected {kind}, found {t.text or 'end of input'!r}", t.line, t.col)
        return t

    def ident(self) -> str:
        t = self.next()
        if t.kind != "ident":
            raise ParseError(f"expected identifier, found {t.text or 'end of input'!r}", t.line, t.col)
        return t.text

    def expr(self) -> Expr:
        t = self.next()
        if t.kind == "float":
            return Const(float(t.text))
        if t.kind == "ident":
            return Var(t.text)
        if t.kind != "lparen":
            raise ParseError(f"expected expression, found {t.text or 'end of input'!r}", t.line, t.col)
        head = self.peek()
        if head.kind == "rparen":
            self.next()
            return Unit()
        if head.kind not in ("ident", "op"):
            raise ParseError("form name must be an identifier or operator", head.line, head.col)
        self.next()
        e = self._form(head)
        self.expect("rparen")
        return e

    def _form(self, head: _Tok) -> Expr:
        name = head.text
        match name:
            case "+":
                return Add(self.expr(), self.expr())
            case "*":
                return Mul(self.expr(), self.expr())
            case ">":
                return Greater(self.expr(), self.expr())
            case "lam":
                return Lam(self.ident(), self.expr())
            case "app":
                return App(self.expr(), self.expr())
            case "let":
                return Let(self.ident(), self.expr(), self.expr())
            case "pair":
                return Pair(self.expr(), self.expr())
            case "fst":
                return Fst(self.expr())
            case "snd":
                return Snd(self.expr())
            case "inl":
                return Inl(self.expr())
            case "inr":
                return Inr(self.expr())
            case "case":
                return Case(self.expr(), self.ident(), self.expr(), self.ident(), self.expr())
            case "ref":
                return Ref(self.expr())
            case "deref":
                return Deref(self.expr())
            case "assign":
                return Assign(self.expr(), self.expr())
            case "shift":
                return Shift(self.ident(), self.expr())
            case "reset":
                return Reset(self.expr())
            case "if":
                return If(self.expr(), self.expr(), self.expr())
            case "letrec":
                fname = self.ident()
                fn = self.expr()
                if not isinstance(fn, Lam):
                    raise ParseError("letrec binds a lam form", head.line, head.col)
                return Letrec(fname, fn, self.expr())
            case "seq":
                return Seq(self.expr(), self.expr())
            case _:
                raise ParseError(f"unknown form {name!r}", head.line, head.col)


def parse(text: str) -> Expr:
    """Parse one S-expression program; sugar forms are preserved as parsed."""
    p = _Parser(_tokenize(text))
    e = p.expr()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return e


# ---------------------------------------------------------------------------
# Printing


def fmt_float(v: float) -> str:
    """Shortest round-trip decimal; integral values drop the trailing .0."""
    s = repr(v)
    if s.endswith(".0"):
        s = s[:-2]
    return s


def pretty(e: Expr) -> str:
    """Render to concrete syntax; parse(pretty(e)) is structurally e."""
    match e:
        case Const(v):
            return fmt_float(v)
        case Var(name):
            return name
        case Unit():
            return "()"
        case Add(a, b):
            return f"(+ {pretty(a)} {pretty(b)})"
        case Mul(a, b):
            return f"(* {pretty(a)} {pretty(b)})"
        case Greater(a, b):
            return f"(> {pretty(a)} {pretty(b)})"
        case Lam(p, b):
            return f"(lam {p} {pretty(b)})"
        case App(f, a):
            return f"(app {pretty(f)} {pretty(a)})"
        case Let(n, b, body):
            return f"(let {n} {pretty(b)} {pretty(body)})"
        case Pair(a, b):
            return f"(pair {pretty(a)} {pretty(b)})"
        case Fst(a):
            return f"(fst {pretty(a)})"
        case Snd(a):
            return f"(snd {pretty(a)})"
        case Inl(a):
            return f"(inl {pretty(a)})"
        case Inr(a):
            return f"(inr {pretty(a)})"
        case Case(s, ln, lb, rn, rb):
            return f"(case {pretty(s)} {ln} {pretty(lb)} {rn} {pretty(rb)})"
        case Ref(a):
            return f"(ref {pretty(a)})"
        case Deref(a):
            return f"(deref {pretty(a)})"
        case Assign(c, v):
            return f"(assign {pretty(c)} {pretty(v)})"
        case Shift(n, b):
            return f"(shift {n} {pretty(b)})"
        case Reset(b):
            return f"(reset {pretty(b)})"
        case If(g, t, o):
            return f"(if {pretty(g)} {pretty(t)} {pretty(o)})"
        case Letrec(n, f, b):
            return f"(letrec {n} {pretty(f)} {pretty(b)})"
        case Seq(a, b):
            return f"(seq {pretty(a)} {pretty(b)})"
        case _:
            raise LangError(f"cannot print {e!r}")
