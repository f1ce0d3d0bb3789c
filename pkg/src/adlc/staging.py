"""Reify reverse-differentiated programs into a first-order ANF-style IR.

Translation-time continuations drive emission: the arithmetic rules emit the
fused forward/backward statement pattern, a conditional lifts its
continuation to a named function so the join code exists exactly once, a
loop becomes a tail-recursive function whose per-iteration backward work is
deferred onto a chain of closures kept in a program slot (the reified tape),
and a tree fold becomes a CPS-recursive function over a runtime tree value.

Cells hold accumulating adjoints; closures are a named function plus a
capture tuple, so the IR stays first-order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .lang import freshen
from .syntax import (
    Add, App, Const, Expr, Greater, If, LangError, Lam, Let, Letrec, Mul,
    NameGen, ParseError, Seq, Unit, Var, all_names, contains_control,
    _Parser, _tokenize,
)

Operand = "str | float"

ENTRY = "snippet"
TAPE_SLOT = "tape"
TAPE_END = "tape_end"


class StagingError(LangError):
    pass


# ---------------------------------------------------------------------------
# IR data types


@dataclass
class Bind:
    dest: str
    op: str  # add | mul | greater | tree_value | tree_left | tree_right | tree_nonempty
    args: tuple


@dataclass
class CellNew:
    dest: str
    init: object


@dataclass
class CellRead:
    dest: str
    cell: str


@dataclass
class CellAccum:
    cell: str
    value: object


@dataclass
class CellSet:
    cell: str
    value: object


@dataclass
class ClosureNew:
    dest: str
    fn: str
    captures: tuple


@dataclass
class Call:
    target: str
    args: tuple
    indirect: bool = False  # target is a symbol holding a closure


@dataclass
class SlotRead:
    dest: str
    slot: str


@dataclass
class SlotSet:
    slot: str
    value: object


@dataclass
class Cond:
    guard: str
    then: list
    orelse: list


@dataclass
class Return:
    value: object


@dataclass
class IRFunction:
    name: str
    params: list  # of (symbol, kind); kind in {"val", "cell", "fun", "tree", "bool"}
    body: list = field(default_factory=list)


@dataclass
class IRProgram:
    functions: dict
    entry: str
    slots: tuple = ()  # program slots holding a backward-chain closure


def ir_stmt_count(p: IRProgram) -> int:
    def stmts(block) -> int:
        n = 0
        for s in block:
            n += 1
            if isinstance(s, Cond):
                n += stmts(s.then) + stmts(s.orelse)
        return n

    return sum(stmts(f.body) for f in p.functions.values())


def ir_cell_op_count(p: IRProgram) -> int:
    def cnt(block) -> int:
        n = 0
        for s in block:
            if isinstance(s, (CellNew, CellRead, CellAccum, CellSet)):
                n += 1
            elif isinstance(s, Cond):
                n += cnt(s.then) + cnt(s.orelse)
        return n

    return sum(cnt(f.body) for f in p.functions.values())


# ---------------------------------------------------------------------------
# Staged values


@dataclass(frozen=True)
class SNum:
    prim: object  # operand: symbol or literal
    adj: str  # adjoint cell symbol


@dataclass(frozen=True)
class SBool:
    sym: str


@dataclass(frozen=True)
class STree:
    sym: str


@dataclass(frozen=True)
class SLoop:
    fn: str


class _Stager:
    def __init__(self):
        self.counter = 0
        self.functions: dict[str, IRFunction] = {}
        self.block: list = []
        self.kinds: dict[str, str] = {}
        self.uses_tape = False
        self.pending_chain: str | None = None

    def sym(self, prefix: str, kind: str) -> str:
        self.counter += 1
        s = f"{prefix}{self.counter}"
        self.kinds[s] = kind
        return s

    def named(self, name: str, kind: str) -> str:
        """Prefer the bare name (matching the shapes in emitted-code
        listings); fall back to a counter suffix on collision."""
        if name not in self.kinds:
            self.kinds[name] = kind
            return name
        return self.sym(name, kind)

    def emit(self, stmt) -> None:
        self.block.append(stmt)

    def function(self, prefix: str, params: list) -> IRFunction:
        name = prefix
        if name in self.functions:
            self.counter += 1
            name = f"{prefix}{self.counter}"
            while name in self.functions:
                self.counter += 1
                name = f"{prefix}{self.counter}"
        fn = IRFunction(name, params)
        self.functions[fn.name] = fn
        return fn

    def segment(self, block: list, thunk) -> None:
        """Run an emission thunk with its own pending-chain scope; a loop
        self-call inside it defers the enclosing backward work into a chain
        closure, and the segment end ties that closure back to the previous
        chain."""
        saved_block, saved_pending = self.block, self.pending_chain
        self.block, self.pending_chain = block, None
        thunk()
        if self.pending_chain is not None:
            self.emit(Call(self.pending_chain, (), indirect=True))
        self.block, self.pending_chain = saved_block, saved_pending

    # -- expression translation ---------------------------------------------

    def num(self, v, what: str) -> SNum:
        if not isinstance(v, SNum):
            raise StagingError(f"{what} is not a staged real")
        return v

    def translate(self, e: Expr, env: dict, k) -> None:
        match e:
            case Const(c):
                d = self.sym("d", "cell")
                self.emit(CellNew(d, 0.0))
                k(SNum(c, d))
            case Var(name):
                try:
                    k(env[name])
                except KeyError:
                    raise StagingError(f"unbound variable: {name}") from None
            case Unit():
                raise StagingError("unit value cannot be staged as a real")
            case Add(e1, e2) | Mul(e1, e2):
                op = "add" if isinstance(e, Add) else "mul"
                self.translate(e1, env, lambda s1: self.translate(
                    e2, env, lambda s2: self._arith(op, self.num(s1, "operand"),
                                                    self.num(s2, "operand"), k)))
            case Greater(e1, e2):
                def cmp2(s1):
                    def cmp3(s2):
                        g = self.sym("g", "bool")
                        self.emit(Bind(g, "greater",
                                       (self.num(s1, "guard operand").prim,
                                        self.num(s2, "guard operand").prim)))
                        k(SBool(g))
                    self.translate(e2, env, cmp3)
                self.translate(e1, env, cmp2)
            case Let(n, bound, body):
                self.translate(bound, env,
                               lambda s: self.translate(body, {**env, n: s}, k))
            case Seq(a, b):
                self.translate(a, env, lambda _s: self.translate(b, env, k))
            case If(g, t, o):
                self._cond(g, t, o, env, k)
            case Letrec(fname, Lam(param, fbody), App(Var(callee), arg)) if callee == fname:
                self._loop(fname, param, fbody, arg, env, k)
            case Letrec():
                raise StagingError(
                    "letrec stages only in loop form: (letrec f (lam x e) (app f e'))")
            case App(Var(fname), arg) if isinstance(env.get(fname), SLoop):
                self._self_call(env[fname].fn, arg, env)
            case _:
                if contains_control(e):
                    raise StagingError("shift/reset cannot be staged")
                raise StagingError(f"form not supported by staging: {e!r}")

    def _arith(self, op: str, s1: SNum, s2: SNum, k) -> None:
        v = self.sym("v", "val")
        self.emit(Bind(v, op, (s1.prim, s2.prim)))
        d = self.sym("d", "cell")
        self.emit(CellNew(d, 0.0))
        k(SNum(v, d))
        # backward, emitted after the rest of the computation
        r1 = self.sym("t", "val")
        self.emit(CellRead(r1, d))
        if op == "add":
            self.emit(CellAccum(s1.adj, r1))
            r2 = self.sym("t", "val")
            self.emit(CellRead(r2, d))
            self.emit(CellAccum(s2.adj, r2))
        else:
            m1 = self.sym("t", "val")
            self.emit(Bind(m1, "mul", (r1, s2.prim)))
            self.emit(CellAccum(s1.adj, m1))
            r2 = self.sym("t", "val")
            self.emit(CellRead(r2, d))
            m2 = self.sym("t", "val")
            self.emit(Bind(m2, "mul", (r2, s1.prim)))
            self.emit(CellAccum(s2.adj, m2))

    def _cond(self, g: Expr, t: Expr, o: Expr, env: dict, k) -> None:
        def with_guard(sb):
            if not isinstance(sb, SBool):
                raise StagingError("if guard must stage to a comparison")
            # lift the continuation to a named function so its body is
            # emitted exactly once
            kf = self.function("k", [(self.named("x", "val"), "val"),
                                     (self.named("d", "cell"), "cell")])
            zx, zd = kf.params[0][0], kf.params[1][0]
            self.segment(kf.body, lambda: k(SNum(zx, zd)))
            cond = Cond(sb.sym, [], [])
            self.emit(cond)
            for branch_e, block in ((t, cond.then), (o, cond.orelse)):
                def stage_branch(branch_e=branch_e):
                    self.translate(branch_e, env, lambda s: self.emit(
                        Call(kf.name, (self.num(s, "branch result").prim,
                                       self.num(s, "branch result").adj))))
                self.segment(block, stage_branch)

        self.translate(g, env, with_guard)

    def _loop(self, fname: str, param: str, fbody: Expr, arg: Expr,
              env: dict, k) -> None:
        self.uses_tape = True
        lf = self.function("loop", [(self.named("x", "val"), "val"),
                                    (self.named("d", "cell"), "cell")])
        x, d = lf.params[0][0], lf.params[1][0]
        loop_env = {**env, fname: SLoop(lf.name), param: SNum(x, d)}
        self.segment(lf.body, lambda: self.translate(fbody, loop_env, k))

        def call_site(sa):
            sa = self.num(sa, "loop argument")
            saved = self.sym("k", "fun")
            self.emit(SlotRead(saved, TAPE_SLOT))
            empty = self.sym("k", "fun")
            self.emit(ClosureNew(empty, TAPE_END, ()))
            self.emit(SlotSet(TAPE_SLOT, empty))
            self.emit(Call(lf.name, (sa.prim, sa.adj)))
            unwind = self.sym("k", "fun")
            self.emit(SlotRead(unwind, TAPE_SLOT))
            self.emit(Call(unwind, (), indirect=True))
            self.emit(SlotSet(TAPE_SLOT, saved))

        self.translate(arg, env, call_site)

    def _self_call(self, lf_name: str, arg: Expr, env: dict) -> None:
        """Tail self-call of a staged loop: push this iteration's backward
        segment onto the chain, then recurse as the last statement.  The
        meta-continuation is not invoked here; the loop's exit branch
        performs it exactly once."""

        def with_arg(sb):
            sb = self.num(sb, "loop argument")
            old = self.sym("k", "fun")
            self.emit(SlotRead(old, TAPE_SLOT))
            bw = self.function("loop_bwd", [])
            kn = self.sym("k", "fun")
            self.emit(ClosureNew(kn, bw.name, ()))
            self.emit(SlotSet(TAPE_SLOT, kn))
            self.emit(Call(lf_name, (sb.prim, sb.adj)))
            # everything emitted after this point is backward work for the
            # enclosing operations of this iteration
            self.block = bw.body
            self.pending_chain = old

        self.translate(arg, env, with_arg)


# ---------------------------------------------------------------------------
# Lambda lifting: close over free symbols by extending parameter lists and
# call sites until fixpoint.


def _operands_of(stmt):
    match stmt:
        case Bind(_, _, args):
            return list(args)
        case CellNew(_, init):
            return [init]
        case CellRead(_, cell):
            return [cell]
        case CellAccum(cell, value) | CellSet(cell, value):
            return [cell, value]
        case ClosureNew(_, _, captures):
            return list(captures)
        case Call(target, args, indirect):
            return ([target] if indirect else []) + list(args)
        case SlotRead():
            return []
        case SlotSet(_, value):
            return [value]
        case Return(value):
            return [value]
        case Cond(guard, _, _):
            return [guard]
    return []


def _dest_of(stmt):
    match stmt:
        case Bind(dest, _, _) | CellNew(dest, _) | CellRead(dest, _) | \
                ClosureNew(dest, _, _) | SlotRead(dest, _):
            return dest
    return None


def _free_syms(fn: IRFunction) -> list[str]:
    defined = {p for p, _ in fn.params}
    free: list[str] = []

    def walk(block):
        for s in block:
            for o in _operands_of(s):
                if isinstance(o, str) and o not in defined and o not in free:
                    free.append(o)
            d = _dest_of(s)
            if d is not None:
                defined.add(d)
            if isinstance(s, Cond):
                walk(s.then)
                walk(s.orelse)

    walk(fn.body)
    return free


def _lambda_lift(prog: IRProgram, kinds: dict[str, str]) -> None:
    """Append each function's free symbols to its parameter list and to
    every call site and closure creation, iterating to fixpoint."""
    for _ in range(40):
        lifted = {name: _free_syms(fn) for name, fn in prog.functions.items()
                  if name != prog.entry}
        lifted = {n: fs for n, fs in lifted.items() if fs}
        if not lifted:
            return
        for name, fs in lifted.items():
            prog.functions[name].params.extend(
                (s, kinds.get(s, "val")) for s in fs)

        def fix(block):
            for s in block:
                if isinstance(s, Call) and not s.indirect and s.target in lifted:
                    s.args = tuple(s.args) + tuple(lifted[s.target])
                elif isinstance(s, ClosureNew) and s.fn in lifted:
                    s.captures = tuple(s.captures) + tuple(lifted[s.fn])
                elif isinstance(s, Cond):
                    fix(s.then)
                    fix(s.orelse)

        for fn in prog.functions.values():
            fix(fn.body)
    raise StagingError("lambda lifting did not converge")


# ---------------------------------------------------------------------------
# Entry points


def _stage(build) -> IRProgram:
    st = _Stager()
    prog_fns = st.functions
    build(st)
    slots = ()
    if st.uses_tape:
        st.functions[TAPE_END] = IRFunction(TAPE_END, [])
        slots = (TAPE_SLOT,)
    prog = IRProgram(prog_fns, ENTRY, slots)
    _lambda_lift(prog, st.kinds)
    return prog


def stage_reverse(f: Expr, input_symbol: str = "in") -> IRProgram:
    """Stage the reverse-mode gradient of a one-argument function.  Sugar
    forms if/letrec drive the conditional and loop generation schemes."""
    if contains_control(f):
        raise StagingError("shift/reset cannot be staged")
    gen = NameGen(all_names(f) | {input_symbol})
    f = freshen(f, gen)
    if not isinstance(f, Lam):
        raise StagingError("staging target must be a one-argument lam")

    def build(st: _Stager) -> None:
        entry = IRFunction(ENTRY, [(input_symbol, "val")])
        st.functions[ENTRY] = entry
        d0 = st.named("d0", "cell")

        def body():
            st.emit(CellNew(d0, 0.0))
            env = {f.param: SNum(input_symbol, d0)}
            st.translate(f.body, env,
                         lambda s: st.emit(CellSet(st.num(s, "result").adj, 1.0)))
            r = st.sym("r", "val")
            st.emit(CellRead(r, d0))
            st.emit(Return(r))

        st.segment(entry.body, body)

    return _stage(build)


def stage_tree(body: Expr, input_symbol: str = "in",
               left_name: str = "l", right_name: str = "r",
               value_name: str = "v") -> IRProgram:
    """Stage the gradient of a fold over a runtime binary tree.

    `body` combines the recursive results of the subtrees (free variables
    `l` and `r`) and the node value (`v`); an empty tree returns the input
    directly.  The staged program is one IR for all tree shapes: a
    CPS-recursive function traverses the tree value at run time.
    """
    if contains_control(body):
        raise StagingError("shift/reset cannot be staged")
    gen = NameGen(all_names(body) | {input_symbol, left_name, right_name, value_name})
    body = freshen(body, gen)

    def build(st: _Stager) -> None:
        tree_sym = "tree"
        entry = IRFunction(ENTRY, [(tree_sym, "tree"), (input_symbol, "val")])
        st.functions[ENTRY] = entry
        st.kinds[tree_sym] = "tree"
        d0 = st.named("d0", "cell")

        # final continuation: set the fold result's adjoint to 1
        ktop = st.function("k", [(st.sym("x", "val"), "val"),
                                 (st.sym("d", "cell"), "cell")])
        ktop.body.append(CellSet(ktop.params[1][0], 1.0))

        # rec(t, k0): traverse left, then right, then combine
        rec = st.function("rec", [(st.sym("t", "tree"), "tree"),
                                  (st.sym("k", "fun"), "fun")])
        t_p, k0 = rec.params[0][0], rec.params[1][0]

        kl = st.function("k_left", [(st.sym("x", "val"), "val"),
                                    (st.sym("d", "cell"), "cell")])
        kr = st.function("k_right", [(st.sym("x", "val"), "val"),
                                     (st.sym("d", "cell"), "cell")])

        def rec_body():
            g = st.sym("g", "bool")
            st.emit(Bind(g, "tree_nonempty", (t_p,)))
            cond = Cond(g, [], [])
            st.emit(cond)

            def then():
                tl = st.sym("t", "tree")
                st.emit(Bind(tl, "tree_left", (t_p,)))
                c = st.sym("k", "fun")
                st.emit(ClosureNew(c, kl.name, ()))
                st.emit(Call(rec.name, (tl, c)))

            def orelse():
                st.emit(Call(k0, (input_symbol, d0), indirect=True))

            st.segment(cond.then, then)
            st.segment(cond.orelse, orelse)

        st.segment(rec.body, rec_body)

        def kl_body():
            tr = st.sym("t", "tree")
            st.emit(Bind(tr, "tree_right", (t_p,)))
            c = st.sym("k", "fun")
            st.emit(ClosureNew(c, kr.name, ()))
            st.emit(Call(rec.name, (tr, c)))

        st.segment(kl.body, kl_body)

        def kr_body():
            v0 = st.sym("v", "val")
            st.emit(Bind(v0, "tree_value", (t_p,)))
            dv = st.sym("d", "cell")
            st.emit(CellNew(dv, 0.0))
            env = {
                left_name: SNum(kl.params[0][0], kl.params[1][0]),
                right_name: SNum(kr.params[0][0], kr.params[1][0]),
                value_name: SNum(v0, dv),
            }
            st.translate(body, env, lambda s: st.emit(
                Call(k0, (st.num(s, "fold result").prim,
                          st.num(s, "fold result").adj), indirect=True)))

        st.segment(kr.body, kr_body)

        def entry_body():
            st.emit(CellNew(d0, 0.0))
            c = st.sym("k", "fun")
            st.emit(ClosureNew(c, ktop.name, ()))
            st.emit(Call(rec.name, (tree_sym, c)))
            r = st.sym("r", "val")
            st.emit(CellRead(r, d0))
            st.emit(Return(r))

        st.segment(entry.body, entry_body)

    return _stage(build)


# ---------------------------------------------------------------------------
# Runtime tree values: (leaf) | (node FLOAT tree tree)


@dataclass(frozen=True)
class TreeData:
    value: float
    left: "TreeData | None"
    right: "TreeData | None"


def parse_tree(text: str) -> TreeData | None:
    toks = _tokenize(text)
    p = _Parser(toks)

    def tree():
        t = p.next()
        if t.kind != "lparen":
            raise ParseError("expected ( to open a tree", t.line, t.col)
        head = p.next()
        if head.kind == "ident" and head.text == "leaf":
            p.expect("rparen")
            return None
        if head.kind == "ident" and head.text == "node":
            v = p.next()
            if v.kind != "float":
                raise ParseError("node value must be a number", v.line, v.col)
            left = tree()
            right = tree()
            p.expect("rparen")
            return TreeData(float(v.text), left, right)
        raise ParseError("tree is (leaf) or (node FLOAT tree tree)",
                         head.line, head.col)

    out = tree()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input {t.text!r}", t.line, t.col)
    return out


def tree_to_expr(tree: TreeData | None, body: Expr,
                 left_name: str = "l", right_name: str = "r",
                 value_name: str = "v") -> Expr:
    """Unfold a tree fold over a concrete tree into a plain object-language
    expression (free variable: the fold's input), for unstaged comparison."""
    gen = NameGen(all_names(body))
    body = freshen(body, gen)

    def go(t: TreeData | None) -> Expr:
        if t is None:
            return Var("x")
        sub = {left_name: go(t.left), right_name: go(t.right),
               value_name: Const(t.value)}

        def subst(e: Expr) -> Expr:
            match e:
                case Var(n) if n in sub:
                    return sub[n]
                case Var() | Const() | Unit():
                    return e
                case _:
                    fields = {f: getattr(e, f) for f in e.__dataclass_fields__}
                    return type(e)(**{
                        f: (subst(v) if isinstance(v, Expr) else v)
                        for f, v in fields.items()})

        return subst(body)

    return Lam("x", go(tree))
