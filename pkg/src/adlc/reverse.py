"""Reverse-mode AD as three source transformations.

All three share one arithmetic pattern: + and * allocate a (value, ref 0)
pair, invoke the rest of the computation, then accumulate adjoints into the
operand cells.  They differ in who owns the control flow:

  target-shift  control operators in the *output*; the evaluator's
                shift/reset runs the backward pass.
  meta-shift    control operators at translation time; here realized by
                threading an explicit single-shot translation continuation,
                so the output is a pure CPS program.
  full-cps      the translator itself is written in continuation-returning
                style; every rule is a function awaiting its translation
                continuation.

Outputs of the last two contain no shift/reset nodes at all.  Tail-call
wrappers and case-join bindings are normalized while terms are built:
eta-redexes over a variable head collapse and lets binding a bare variable
rename instead.
"""

from __future__ import annotations

from typing import Callable

from .forward import TransformError, split_pair
from .interp import eval_expr
from .lang import desugar, freshen
from .syntax import (
    Add, App, Assign, Case, Const, Deref, Expr, Fst, Greater, Inl, Inr, Lam,
    Let, Mul, NameGen, Pair, Ref, Reset, Seq, Shift, Snd, Unit, Var,
    all_names, contains_control,
)

MetaK = Callable[[Expr], Expr]

VARIANTS = ("target-shift", "meta-shift", "full-cps")


def _rename(e: Expr, old: str, new: str) -> Expr:
    """Occurrence renaming of a free variable; safe post-freshen because no
    inner binder reuses the name."""
    match e:
        case Var(name):
            return Var(new) if name == old else e
        case Const() | Unit():
            return e
        case Lam(p, b):
            return Lam(p, _rename(b, old, new))
        case Let(n, b, body):
            return Let(n, _rename(b, old, new), _rename(body, old, new))
        case Case(s, ln, lb, rn, rb):
            return Case(_rename(s, old, new), ln, _rename(lb, old, new),
                        rn, _rename(rb, old, new))
        case Shift(n, b):
            return Shift(n, _rename(b, old, new))
        case _:
            fields = {f: getattr(e, f) for f in e.__dataclass_fields__}
            return type(e)(**{
                f: (_rename(v, old, new) if isinstance(v, Expr) else v)
                for f, v in fields.items()
            })


def normalize_tail(e: Expr) -> Expr:
    """Contractions applied to construction-time tail wrappers:
    lam y. (k y) -> k for a variable head k, and let y = y1 in e -> e with
    y renamed to y1.  Both are pure renamings; contraction over a compound
    head is not performed since it would relocate its effects.  Anything
    else is returned unchanged."""
    match e:
        case Lam(p, App(Var(f), Var(a))) if a == p and f != p:
            return Var(f)
        case Let(n, Var(z), body):
            return _rename(body, n, z)
        case _:
            return e


def _wavy_lam(param: str, body: Expr) -> Expr:
    return normalize_tail(Lam(param, body))


def _wavy_let(name: str, bound: Expr, body_of: Callable[[Expr], Expr]) -> Expr:
    """Bind a continuation value, renaming instead when it is a variable."""
    if isinstance(bound, Var):
        return body_of(bound)
    return Let(name, bound, body_of(Var(name)))


def _smart_let(name: str, bound: Expr, body: Expr) -> Expr:
    return normalize_tail(Let(name, bound, body))


def _accum(cell: Expr, delta: Expr) -> Expr:
    # y1 += delta  desugars to  y1 := !y1 + delta
    return Assign(cell, Add(Deref(cell), delta))


def _arith_block(op: str, t1: Expr, t2: Expr, gen: NameGen,
                 apply_k: Callable[[Expr], Expr]) -> Expr:
    """The shared +/* pattern: bind operand pairs, allocate the result with
    a zero adjoint cell, run the continuation, then accumulate backwards."""
    p1, a1, w1 = split_pair(t1, gen)
    p2, a2, w2 = split_pair(t2, gen)
    y = gen.fresh()
    yd = Snd(Var(y))
    if op == "add":
        primal = Add(p1, p2)
        d1, d2 = Deref(yd), Deref(yd)
    else:
        primal = Mul(p1, p2)
        d1, d2 = Mul(Deref(yd), p2), Mul(Deref(yd), p1)
    block = Let(y, Pair(primal, Ref(Const(0.0))),
                Seq(apply_k(Var(y)),
                    Seq(_accum(a1, d1), _accum(a2, d2))))
    return w1(w2(block))


def _check_source(e: Expr) -> None:
    if contains_control(e):
        raise TransformError("shift/reset not supported in reverse AD source")


# ---------------------------------------------------------------------------
# Variant 1: shift/reset in the target language


def rev_transform_target_shift(e: Expr, gen: NameGen | None = None) -> Expr:
    """Rewrite + and * into shift expressions that allocate (value, ref 0),
    invoke the captured continuation, then accumulate adjoints; all other
    forms map homomorphically."""
    _check_source(e)
    gen = gen or NameGen(all_names(e))

    def t(e: Expr) -> Expr:
        match e:
            case Const():
                return Pair(e, Ref(Const(0.0)))
            case Var() | Unit():
                return e
            case Add(e1, e2) | Mul(e1, e2):
                op = "add" if isinstance(e, Add) else "mul"
                return _shifted_arith(op, t(e1), t(e2))
            case Greater(e1, e2):
                p1, _, w1 = split_pair(t(e1), gen)
                p2, _, w2 = split_pair(t(e2), gen)
                return w1(w2(Greater(p1, p2)))
            case Lam(p, b):
                return Lam(p, t(b))
            case App(f, a):
                return App(t(f), t(a))
            case Let(n, b, body):
                return Let(n, t(b), t(body))
            case Pair(a, b):
                return Pair(t(a), t(b))
            case Fst(a):
                return Fst(t(a))
            case Snd(a):
                return Snd(t(a))
            case Inl(a):
                return Inl(t(a))
            case Inr(a):
                return Inr(t(a))
            case Case(s, ln, lb, rn, rb):
                return Case(t(s), ln, t(lb), rn, t(rb))
            case Ref(a):
                return Ref(t(a))
            case Deref(a):
                return Deref(t(a))
            case Assign(c, v):
                return Assign(t(c), t(v))
            case _:
                raise TransformError(f"cannot reverse-transform {e!r} (desugar first)")

    def _shifted_arith(op: str, t1: Expr, t2: Expr) -> Expr:
        # operand bindings sit outside the shift
        p1, a1, w1 = split_pair(t1, gen)
        p2, a2, w2 = split_pair(t2, gen)
        k = gen.fresh("k")
        y = gen.fresh()
        yd = Snd(Var(y))
        if op == "add":
            primal = Add(p1, p2)
            d1, d2 = Deref(yd), Deref(yd)
        else:
            primal = Mul(p1, p2)
            d1, d2 = Mul(Deref(yd), p2), Mul(Deref(yd), p1)
        body = Let(y, Pair(primal, Ref(Const(0.0))),
                   Seq(App(Var(k), Var(y)),
                       Seq(_accum(a1, d1), _accum(a2, d2))))
        return w1(w2(Shift(k, body)))

    return t(e)


# ---------------------------------------------------------------------------
# Variant 2: shift/reset at translation time (explicit single-shot
# translation continuations); output is pure CPS.


def rev_transform_meta_shift(e: Expr, gen: NameGen | None = None,
                             mk: MetaK | None = None) -> Expr:
    """Translate with the control effects resolved during translation; the
    output threads explicit continuation parameters and contains no
    shift/reset nodes."""
    _check_source(e)
    gen = gen or NameGen(all_names(e))
    return _t10(e, mk or (lambda m: m), gen)


def _t10(e: Expr, mk: MetaK, gen: NameGen) -> Expr:
    rec = _t10
    match e:
        case Const():
            return mk(Pair(e, Ref(Const(0.0))))
        case Unit():
            return mk(e)
        case Var():
            return mk(e)
        case Add(e1, e2) | Mul(e1, e2):
            op = "add" if isinstance(e, Add) else "mul"
            return rec(e1,
                       lambda t1: rec(e2,
                                      lambda t2: _arith_block(op, t1, t2, gen, mk),
                                      gen),
                       gen)
        case Greater(e1, e2):
            def g2(t1):
                def g3(t2):
                    p1, _, w1 = split_pair(t1, gen)
                    p2, _, w2 = split_pair(t2, gen)
                    return w1(w2(mk(Greater(p1, p2))))
                return rec(e2, g3, gen)
            return rec(e1, g2, gen)
        case Lam(p, b):
            k = gen.fresh("k")
            body = rec(b, lambda m: App(Var(k), m), gen)
            return mk(Lam(p, Lam(k, body)))
        case App(e1, e2):
            a = gen.fresh()
            return rec(e1,
                       lambda m: rec(e2,
                                     lambda n: App(App(m, n),
                                                   _wavy_lam(a, mk(Var(a)))),
                                     gen),
                       gen)
        case Let(n, e1, e2):
            return rec(e1, lambda v1: _smart_let(n, v1, rec(e2, mk, gen)), gen)
        case Fst(a):
            return rec(a, lambda v: mk(Fst(v)), gen)
        case Snd(a):
            return rec(a, lambda v: mk(Snd(v)), gen)
        case Inl(a):
            return rec(a, lambda v: mk(Inl(v)), gen)
        case Inr(a):
            return rec(a, lambda v: mk(Inr(v)), gen)
        case Ref(a):
            return rec(a, lambda v: mk(Ref(v)), gen)
        case Deref(a):
            return rec(a, lambda v: mk(Deref(v)), gen)
        case Assign(c, v):
            return rec(c, lambda vc: rec(v, lambda vv: mk(Assign(vc, vv)), gen), gen)
        case Pair(a, b):
            return rec(a, lambda va: rec(b, lambda vb: mk(Pair(va, vb)), gen), gen)
        case Case(s, ln, lb, rn, rb):
            def with_scrut(v):
                a = gen.fresh()
                k1 = gen.fresh("k")
                k1val = _wavy_lam(a, mk(Var(a)))
                return _wavy_let(
                    k1, k1val,
                    lambda kref: Case(v,
                                      ln, _t10(lb, lambda m: App(kref, m), gen),
                                      rn, _t10(rb, lambda m: App(kref, m), gen)))
            return rec(s, with_scrut, gen)
        case _:
            raise TransformError(f"cannot reverse-transform {e!r} (desugar first)")


# ---------------------------------------------------------------------------
# Variant 3: the translator itself in CPS; every rule awaits its
# translation continuation.


def rev_transform_full_cps(e: Expr, gen: NameGen | None = None) -> Expr:
    """Fully CPS meta-level translation; no shift/reset anywhere, neither in
    the translator nor in its output."""
    _check_source(e)
    gen = gen or NameGen(all_names(e))
    return _t11(e, gen)(lambda m: m)


def _t11(e: Expr, gen: NameGen):
    match e:
        case Const():
            return lambda k: k(Pair(e, Ref(Const(0.0))))
        case Unit():
            return lambda k: k(e)
        case Var():
            return lambda k: k(e)
        case Add(e1, e2) | Mul(e1, e2):
            op = "add" if isinstance(e, Add) else "mul"
            c1, c2 = _t11(e1, gen), _t11(e2, gen)
            # dynamic lets for p1/p2 preserve sharing, evaluation order,
            # and asymptotic complexity
            return lambda k: c1(lambda p1: c2(
                lambda p2: _arith_block(op, p1, p2, gen, k)))
        case Greater(e1, e2):
            c1, c2 = _t11(e1, gen), _t11(e2, gen)

            def run(k):
                def j1(t1):
                    def j2(t2):
                        q1, _, w1 = split_pair(t1, gen)
                        q2, _, w2 = split_pair(t2, gen)
                        return w1(w2(k(Greater(q1, q2))))
                    return c2(j2)
                return c1(j1)
            return run
        case Lam(p, b):
            cb = _t11(b, gen)

            def run(k):
                kv = gen.fresh("k")
                return k(Lam(p, Lam(kv, cb(lambda m: App(Var(kv), m)))))
            return run
        case App(e1, e2):
            c1, c2 = _t11(e1, gen), _t11(e2, gen)

            def run(k):
                a = gen.fresh()
                return c1(lambda m: c2(
                    lambda n: App(App(m, n), _wavy_lam(a, k(Var(a))))))
            return run
        case Let(n, e1, e2):
            c1, c2 = _t11(e1, gen), _t11(e2, gen)
            return lambda k: c1(lambda y1: _smart_let(n, y1, c2(k)))
        case Fst(a):
            c = _t11(a, gen)
            return lambda k: c(lambda y: k(Fst(y)))
        case Snd(a):
            c = _t11(a, gen)
            return lambda k: c(lambda y: k(Snd(y)))
        case Inl(a):
            c = _t11(a, gen)
            return lambda k: c(lambda y: k(Inl(y)))
        case Inr(a):
            c = _t11(a, gen)
            return lambda k: c(lambda y: k(Inr(y)))
        case Ref(a):
            c = _t11(a, gen)
            return lambda k: c(lambda y: k(Ref(y)))
        case Deref(a):
            c = _t11(a, gen)
            return lambda k: c(lambda y: k(Deref(y)))
        case Assign(a, b):
            ca, cb = _t11(a, gen), _t11(b, gen)
            return lambda k: ca(lambda y1: cb(lambda y2: k(Assign(y1, y2))))
        case Pair(a, b):
            ca, cb = _t11(a, gen), _t11(b, gen)
            return lambda k: ca(lambda y1: cb(lambda y2: k(Pair(y1, y2))))
        case Case(s, ln, lb, rn, rb):
            cs = _t11(s, gen)
            cl, cr = _t11(lb, gen), _t11(rb, gen)

            def run(k):
                a = gen.fresh()
                k1 = gen.fresh("k")
                k1val = _wavy_lam(a, k(Var(a)))
                return _wavy_let(
                    k1, k1val,
                    lambda kref: cs(lambda v: Case(
                        v,
                        ln, cl(lambda m: App(kref, m)),
                        rn, cr(lambda n: App(kref, n)))))
            return run
        case _:
            raise TransformError(f"cannot reverse-transform {e!r} (desugar first)")


# ---------------------------------------------------------------------------
# Gradient wrappers


def _prepare(f: Expr) -> tuple[Lam, NameGen]:
    gen = NameGen(all_names(f))
    f = freshen(desugar(f, gen), gen)
    if not isinstance(f, Lam):
        raise TransformError("gradient target must be a one-argument lam")
    return f, gen


def reverse_gradient_program(f: Expr, variant: str = "meta-shift") -> Expr:
    """Build Transform(f): seed the input with a zero adjoint cell, run the
    transformed function, set the result adjoint to 1, read the input cell."""
    f, gen = _prepare(f)
    x = gen.fresh()
    xh = gen.fresh()
    seed = Pair(Var(x), Ref(Const(0.0)))
    read_back = Deref(Snd(Var(xh)))
    z = gen.fresh("z")
    set_one = _wavy_lam(z, Assign(Snd(Var(z)), Const(1.0)))

    if variant == "target-shift":
        tf = rev_transform_target_shift(f, gen)
        zh = gen.fresh("z")
        run = Reset(Let(zh, App(tf, Var(xh)), Assign(Snd(Var(zh)), Const(1.0))))
    elif variant == "meta-shift":
        tf = rev_transform_meta_shift(f, gen)
        run = App(App(tf, Var(xh)), set_one)
    elif variant == "full-cps":
        run = _t11(f, gen)(lambda m: App(App(m, Var(xh)), set_one))
    else:
        raise TransformError(f"unknown reverse variant {variant!r}")

    return Lam(x, Let(xh, seed, Seq(run, read_back)))


def grad_reverse(f: Expr, x0: float, variant: str = "meta-shift") -> float:
    """Gradient of a one-argument real lambda at x0 via the chosen reverse
    transformation variant."""
    prog = reverse_gradient_program(f, variant)
    v, _ = eval_expr(App(prog, Const(x0)))
    if type(v) is not float:
        raise TransformError("gradient program did not return a real")
    return v


def grad_reverse_of_reverse(f: Expr, x0: float) -> float:
    """Second derivative by transforming the already-transformed gradient
    program again (source-level composition of reverse passes)."""
    g = reverse_gradient_program(f, "meta-shift")
    h = reverse_gradient_program(g, "meta-shift")
    v, _ = eval_expr(App(h, Const(x0)))
    if type(v) is not float:
        raise TransformError("gradient program did not return a real")
    return v
