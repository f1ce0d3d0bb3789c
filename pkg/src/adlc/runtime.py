"""Host-level AD runtimes: dual numbers (tagged and naive), three reverse
formulations (explicit CPS, tape, purely functional), and their composition
for second derivatives.

Every reverse runtime keeps adjoints in a dense per-run array indexed by
creation order, so runs are independent and re-entrant.  The only shared
state is the tag counter for nested forward invocations.
"""

from __future__ import annotations

import itertools
from typing import Callable

from .lang import desugar, freshen
from .syntax import Add, Const, Expr, LangError, Lam, Let, Mul, Var

_TAGS = itertools.count(1)


class RuntimeADError(LangError):
    pass


# ---------------------------------------------------------------------------
# Dual numbers


class NumF:
    """Naive primal/tangent pair; exhibits perturbation confusion when
    gradient calls nest."""

    __slots__ = ("x", "d")

    def __init__(self, x: float, d: float):
        self.x = x
        self.d = d

    @staticmethod
    def lift(v):
        return v if isinstance(v, NumF) else NumF(float(v), 0.0)

    def __add__(self, other):
        other = NumF.lift(other)
        return NumF(self.x + other.x, self.d + other.d)

    __radd__ = __add__

    def __mul__(self, other):
        other = NumF.lift(other)
        return NumF(self.x * other.x, self.d * other.x + other.d * self.x)

    __rmul__ = __mul__


def grad_naive(f: Callable, x0: float) -> float:
    y = f(NumF(x0, 1.0))
    return y.d if isinstance(y, NumF) else 0.0


class Dual:
    """Tagged dual number; values carrying a lower tag are constants with
    respect to a higher-tag derivative."""

    __slots__ = ("x", "d", "tag")

    def __init__(self, x, d, tag: int):
        self.x = x
        self.d = d
        self.tag = tag

    def __repr__(self):
        return f"Dual({self.x!r}, {self.d!r}, tag={self.tag})"

    def __add__(self, other):
        return d_add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return d_mul(self, other)

    __rmul__ = __mul__


def _tag_of(v) -> int:
    return v.tag if type(v) is Dual else 0


def d_add(a, b):
    ta, tb = _tag_of(a), _tag_of(b)
    if ta == tb:
        if ta == 0:
            return a + b
        return Dual(d_add(a.x, b.x), d_add(a.d, b.d), ta)
    if ta > tb:
        return Dual(d_add(a.x, b), a.d, ta)
    return Dual(d_add(a, b.x), b.d, tb)


def d_mul(a, b):
    ta, tb = _tag_of(a), _tag_of(b)
    if ta == tb:
        if ta == 0:
            return a * b
        return Dual(d_mul(a.x, b.x), d_add(d_mul(a.d, b.x), d_mul(b.d, a.x)), ta)
    if ta > tb:
        return Dual(d_mul(a.x, b), d_mul(a.d, b), ta)
    return Dual(d_mul(a, b.x), d_mul(a, b.d), tb)


def grad_dual_tagged(f: Callable, x0) -> float:
    """Tangent of f at x0; assigns a fresh tag per invocation so that nested
    calls never mix their perturbations."""
    tag = next(_TAGS)
    y = f(Dual(x0, 1.0, tag))
    if type(y) is Dual and y.tag == tag:
        return y.d
    return 0.0


def grad_dual(f: Callable, x0: float) -> float:
    """Derivative via the dual-number runtime: seed tangent 1, read the
    result tangent."""
    return grad_dual_tagged(f, x0)


def perturbation_confusion_probe() -> tuple[float, float]:
    """Run the nested-gradient program that conflates perturbations under
    naive duals; returns (naive inner gradient, tagged inner gradient)."""
    seen = {}

    def outer_naive(x: NumF) -> NumF:
        inner = grad_naive(lambda y: x + y, 1.0)
        seen["naive"] = inner
        return x * NumF(inner, 0.0)

    seen["naive_outer"] = grad_naive(outer_naive, 1.0)

    def outer_tagged(x):
        inner = grad_dual_tagged(lambda y: d_add(x, y), 1.0)
        seen["tagged"] = inner
        return d_mul(x, inner)

    seen["tagged_outer"] = grad_dual_tagged(outer_tagged, 1.0)
    _PROBE_OUTER.update(seen)
    return seen["naive"], seen["tagged"]


_PROBE_OUTER: dict = {}


def probe_outer_gradients() -> dict:
    """Outer-gradient values recorded by the last confusion probe run."""
    perturbation_confusion_probe()
    return dict(_PROBE_OUTER)


# ---------------------------------------------------------------------------
# Reverse runtimes: shared scalar algebra (floats, or tagged duals for
# forward-over-reverse second derivatives)

SCALAR_FLOAT = (lambda a, b: a + b, lambda a, b: a * b)
SCALAR_DUAL = (d_add, d_mul)


class _Run:
    """Per-invocation adjoint storage; index order is creation order."""

    def __init__(self, scalar=SCALAR_FLOAT):
        self.adj: list = []
        self.add, self.mul = scalar
        self.trace: list | None = None

    def slot(self) -> int:
        self.adj.append(0.0)
        return len(self.adj) - 1

    def accum(self, idx: int, delta) -> None:
        if self.trace is not None:
            self.trace.append((idx, delta))
        self.adj[idx] = self.add(self.adj[idx], delta)


class RevNum:
    """Reverse-mode number for the continuation-passing runtime: a primal
    and an adjoint slot id.  + and * return functions awaiting the delimited
    continuation, per the explicit-CPS formulation."""

    __slots__ = ("x", "idx", "run")

    def __init__(self, x, idx: int, run: _Run):
        self.x = x
        self.idx = idx
        self.run = run

    def _lift(self, v):
        return v if isinstance(v, RevNum) else RevNum(v, self.run.slot(), self.run)

    def __add__(self, other):
        other = self._lift(other)
        run = self.run

        def with_k(k):
            y = RevNum(run.add(self.x, other.x), run.slot(), run)
            k(y)
            run.accum(self.idx, run.adj[y.idx])
            run.accum(other.idx, run.adj[y.idx])

        return with_k

    __radd__ = __add__

    def __mul__(self, other):
        other = self._lift(other)
        run = self.run

        def with_k(k):
            y = RevNum(run.mul(self.x, other.x), run.slot(), run)
            k(y)
            run.accum(self.idx, run.mul(other.x, run.adj[y.idx]))
            run.accum(other.idx, run.mul(self.x, run.adj[y.idx]))

        return with_k

    __rmul__ = __mul__


def grad_cps(f: Callable, x0, scalar=SCALAR_FLOAT, run_out: list | None = None,
             trace: bool = False):
    """Reverse-mode gradient via nested continuations: run forward, set the
    final adjoint to 1, unwind accumulating adjoints, read the input's."""
    run = _Run(scalar)
    if trace:
        run.trace = []
    if run_out is not None:
        run_out.append(run)
    z = RevNum(x0, run.slot(), run)

    def final(r: RevNum):
        run.adj[r.idx] = 1.0

    f(z)(final)
    return run.adj[z.idx]


class TapeNum:
    """Reverse-mode number for the tape runtime; operations append
    defunctionalized backward records replayed in reverse order."""

    __slots__ = ("x", "idx", "run")

    def __init__(self, x, idx: int, run):
        self.x = x
        self.idx = idx
        self.run = run

    def _lift(self, v):
        return v if isinstance(v, TapeNum) else TapeNum(v, self.run.slot(), self.run)

    def __add__(self, other):
        other = self._lift(other)
        run = self.run
        y = TapeNum(run.add(self.x, other.x), run.slot(), run)
        run.tape.append(("add", self.idx, other.idx, y.idx, self.x, other.x))
        return y

    __radd__ = __add__

    def __mul__(self, other):
        other = self._lift(other)
        run = self.run
        y = TapeNum(run.mul(self.x, other.x), run.slot(), run)
        run.tape.append(("mul", self.idx, other.idx, y.idx, self.x, other.x))
        return y

    __rmul__ = __mul__


class TapeRun(_Run):
    def __init__(self, scalar=SCALAR_FLOAT):
        super().__init__(scalar)
        self.tape: list = []

    def replay(self) -> None:
        """Play the recorded actions in reverse insertion order."""
        for kind, a, b, y, ax, bx in reversed(self.tape):
            if kind == "add":
                self.accum(a, self.adj[y])
                self.accum(b, self.adj[y])
            else:
                self.accum(a, self.mul(bx, self.adj[y]))
                self.accum(b, self.mul(ax, self.adj[y]))


def grad_tape(f: Callable, x0, scalar=SCALAR_FLOAT, run_out: list | None = None,
              trace: bool = False):
    """Reverse-mode gradient via a per-run tape: record forward, replay
    backward."""
    run = TapeRun(scalar)
    if trace:
        run.trace = []
    if run_out is not None:
        run_out.append(run)
    z = TapeNum(x0, run.slot(), run)
    y = f(z)
    run.adj[y.idx] = 1.0
    run.replay()
    return run.adj[z.idx]


# ---------------------------------------------------------------------------
# Purely functional reverse mode (reified adjoint store)


class FunNum:
    __slots__ = ("x", "idx", "run")

    def __init__(self, x, idx: int, run):
        self.x = x
        self.idx = idx
        self.run = run


class FunRun:
    """Id supply only; gradients live in immutable maps, never mutated."""

    def __init__(self, scalar=SCALAR_FLOAT):
        self.next_id = 0
        self.add, self.mul = scalar

    def num(self, x) -> FunNum:
        n = FunNum(x, self.next_id, self)
        self.next_id += 1
        return n


def map_get(m: dict, idx: int):
    return m.get(idx, 0.0)


def map_add(m: dict, idx: int, delta) -> dict:
    """Functional point update: a new map with delta summed at idx."""
    out = dict(m)
    out[idx] = out.get(idx, 0.0) + delta
    return out


def merge(m1: dict, m2: dict) -> dict:
    """Pointwise addition of adjoint maps; absent keys read as zero."""
    out = dict(m1)
    for k, v in m2.items():
        out[k] = out.get(k, 0.0) + v
    return out


def fun_add(a: FunNum, b: FunNum):
    run = a.run

    def with_k(k):
        y = run.num(run.add(a.x, b.x))
        m = k(y)
        yd = map_get(m, y.idx)
        return map_add(map_add(m, a.idx, yd), b.idx, yd)

    return with_k


def fun_mul(a: FunNum, b: FunNum):
    run = a.run

    def with_k(k):
        y = run.num(run.mul(a.x, b.x))
        m = k(y)
        yd = map_get(m, y.idx)
        m = map_add(m, a.idx, run.mul(b.x, yd))
        return map_add(m, b.idx, run.mul(a.x, yd))

    return with_k


def grad_functional(f: Callable, x0, scalar=SCALAR_FLOAT):
    """Reverse-mode gradient without mutation: continuations return adjoint
    maps merged by pointwise addition."""
    run = FunRun(scalar)
    z = run.num(x0)
    m = f(z)(lambda r: {r.idx: 1.0})
    return map_get(m, z.idx)


# ---------------------------------------------------------------------------
# Expression bridges (arithmetic fragment only): compile object-language
# programs onto the runtime combinators.


def _arith_lambda(f: Expr) -> Lam:
    f = freshen(desugar(f))
    if not isinstance(f, Lam):
        raise RuntimeADError("gradient target must be a one-argument lam")
    return f


def _interp_direct(e: Expr, env: dict, const, add, mul):
    match e:
        case Const(c):
            return const(c)
        case Var(name):
            return env[name]
        case Add(a, b):
            return add(_interp_direct(a, env, const, add, mul),
                       _interp_direct(b, env, const, add, mul))
        case Mul(a, b):
            return mul(_interp_direct(a, env, const, add, mul),
                       _interp_direct(b, env, const, add, mul))
        case Let(n, bound, body):
            v = _interp_direct(bound, env, const, add, mul)
            return _interp_direct(body, {**env, n: v}, const, add, mul)
        case _:
            raise RuntimeADError(f"not in the arithmetic fragment: {e!r}")


def _interp_cps(e: Expr, env: dict, num, combine_add, combine_mul, k):
    match e:
        case Const(c):
            return k(num(c))
        case Var(name):
            return k(env[name])
        case Add(a, b):
            return _interp_cps(a, env, num, combine_add, combine_mul,
                               lambda va: _interp_cps(b, env, num, combine_add, combine_mul,
                                                      lambda vb: combine_add(va, vb)(k)))
        case Mul(a, b):
            return _interp_cps(a, env, num, combine_add, combine_mul,
                               lambda va: _interp_cps(b, env, num, combine_add, combine_mul,
                                                      lambda vb: combine_mul(va, vb)(k)))
        case Let(n, bound, body):
            return _interp_cps(bound, env, num, combine_add, combine_mul,
                               lambda v: _interp_cps(body, {**env, n: v},
                                                     num, combine_add, combine_mul, k))
        case _:
            raise RuntimeADError(f"not in the arithmetic fragment: {e!r}")


def dual_fn(f: Expr):
    """Compile an arithmetic-fragment program to a host function over tagged
    duals, for use with the nesting gradient operators."""
    lam = _arith_lambda(f)

    def run(x):
        return _interp_direct(lam.body, {lam.param: x}, lambda c: c, d_add, d_mul)

    return run


def grad_dual_expr(f: Expr, x0: float) -> float:
    """Dual-number gradient of an object-language program.  Constants are
    lifted with explicit zero tangents so tangent arithmetic matches the
    forward transformation operation for operation."""
    f = _arith_lambda(f)
    tag = next(_TAGS)
    env = {f.param: Dual(x0, 1.0, tag)}
    y = _interp_direct(f.body, env, lambda c: Dual(c, 0.0, tag), d_add, d_mul)
    return y.d if type(y) is Dual and y.tag == tag else 0.0


def grad_cps_expr(f: Expr, x0: float, run_out: list | None = None,
                  trace: bool = False) -> float:
    f = _arith_lambda(f)

    def body(z):
        return lambda k: _interp_cps(
            f.body, {f.param: z}, lambda c: z._lift(c),
            lambda a, b: a + b, lambda a, b: a * b, k)

    return grad_cps(body, x0, run_out=run_out, trace=trace)


def grad_tape_expr(f: Expr, x0: float, run_out: list | None = None,
                   trace: bool = False) -> float:
    f = _arith_lambda(f)

    def body(z):
        return _interp_direct(f.body, {f.param: z},
                              lambda c: z._lift(c),
                              lambda a, b: a + b, lambda a, b: a * b)

    return grad_tape(body, x0, run_out=run_out, trace=trace)


def grad_functional_expr(f: Expr, x0: float) -> float:
    f = _arith_lambda(f)

    def body(z):
        return lambda k: _interp_cps(
            f.body, {f.param: z}, lambda c: z.run.num(c),
            fun_add, fun_mul, k)

    return grad_functional(body, x0)


def grad_forward_over_reverse(f: Expr, x0: float) -> float:
    """Second derivative in one pass: the reverse runtime runs with tagged
    duals as its scalar type, so the input adjoint carries a tangent."""
    f = _arith_lambda(f)
    tag = next(_TAGS)

    run = _Run(SCALAR_DUAL)
    z = RevNum(Dual(x0, 1.0, tag), run.slot(), run)

    def lift_const(c):
        return RevNum(c, run.slot(), run)

    def final(r):
        run.adj[r.idx] = 1.0

    _interp_cps(f.body, {f.param: z}, lift_const,
                lambda a, b: a + b, lambda a, b: a * b, final)
    g = run.adj[z.idx]
    return g.d if type(g) is Dual and g.tag == tag else 0.0
