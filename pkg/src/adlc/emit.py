"""Deterministic C-like text from staged IR.

One function per IR function; adjoint cells become double variables passed
by reference; continuation closures become std::function values wrapping a
call to their named body.  Cells that escape into a closure outlive their
frame (the backward chain of a staged loop runs after the loop returns), so
those are emitted as shared heap doubles; everything else stays a plain
local.  Recursive functions are declared up front so the text never needs a
self-referential lambda.  Output is stable across runs: two-space indent,
LF line endings.
"""

from __future__ import annotations

from .staging import (
    Bind, Call, CellAccum, CellNew, CellRead, CellSet, ClosureNew, Cond,
    IRFunction, IRProgram, Return, SlotRead, SlotSet, TAPE_END,
)
from .syntax import fmt_float

_OPS = {"add": "+", "mul": "*", "greater": ">"}
_TREE_FIELDS = {
    "tree_value": "{}.value",
    "tree_left": "{}.left()",
    "tree_right": "{}.right()",
    "tree_nonempty": "{}.notEmpty",
}
_KONT = {0: "kont", 2: "kont1"}


def _returns_value(fn: IRFunction) -> bool:
    def scan(block) -> bool:
        for s in block:
            if isinstance(s, Return):
                return True
            if isinstance(s, Cond) and (scan(s.then) or scan(s.orelse)):
                return True
        return False

    return scan(fn.body)


def _walk(block):
    for s in block:
        yield s
        if isinstance(s, Cond):
            yield from _walk(s.then)
            yield from _walk(s.orelse)


class _Emitter:
    def __init__(self, prog: IRProgram):
        self.prog = prog
        self.fun_arity: dict[str, int] = {}
        # per function: symbol -> kind, and the set of local cells that
        # escape into closures (emitted on the heap)
        self.kinds: dict[str, dict[str, str]] = {}
        self.heap_cells: dict[str, set] = {}
        self._analyze()

    def _analyze(self) -> None:
        for fn in self.prog.functions.values():
            kinds = {p: k for p, k in fn.params}
            heap = set()
            for s in _walk(fn.body):
                match s:
                    case CellNew(dest, _):
                        kinds[dest] = "local_cell"
                    case CellRead(dest, _):
                        kinds[dest] = "val"
                    case Bind(dest, op, _):
                        kinds[dest] = "bool" if op in ("greater", "tree_nonempty") \
                            else ("tree" if op in ("tree_left", "tree_right") else "val")
                    case ClosureNew(dest, f, captures):
                        kinds[dest] = "fun"
                        target = self.prog.functions.get(f)
                        if target is not None:
                            self.fun_arity[dest] = len(target.params) - len(captures)
                    case SlotRead(dest, _):
                        kinds[dest] = "fun"
                    case Call(target, args, indirect):
                        if indirect:
                            self.fun_arity.setdefault(target, len(args))
            for s in _walk(fn.body):
                if isinstance(s, ClosureNew):
                    for c in s.captures:
                        if isinstance(c, str) and kinds.get(c) == "local_cell":
                            heap.add(c)
            self.kinds[fn.name] = kinds
            self.heap_cells[fn.name] = heap
        for fn in self.prog.functions.values():
            for p, k in fn.params:
                if k == "fun":
                    self.fun_arity.setdefault(p, 0)

    def kont_type(self, sym: str) -> str:
        return _KONT.get(self.fun_arity.get(sym, 0), "kont")

    def param(self, p: str, k: str) -> str:
        if k == "val":
            return f"double {p}"
        if k == "cell":
            return f"double& {p}"
        if k == "fun":
            return f"{self.kont_type(p)} {p}"
        if k == "tree":
            return f"Tree {p}"
        return f"bool {p}"

    def signature(self, fn: IRFunction, ret: str) -> str:
        params = ", ".join(self.param(p, k) for p, k in fn.params)
        return f"{ret} {fn.name}({params})"

    def emit_function(self, fn: IRFunction, ret: str, out: list) -> None:
        kinds = self.kinds[fn.name]
        heap = self.heap_cells[fn.name]

        def operand(o) -> str:
            if not isinstance(o, str):
                return fmt_float(o)
            return o

        def cell_lvalue(sym: str) -> str:
            return f"*{sym}" if sym in heap else sym

        def cell_argument(o) -> str:
            # a cell passed where the callee expects double&
            return cell_lvalue(o) if isinstance(o, str) else fmt_float(o)

        def call_args(target: str, args, captures=()) -> str:
            fn_t = self.prog.functions.get(target)
            rendered = []
            seq = list(args) + list(captures)
            for i, a in enumerate(seq):
                kind = fn_t.params[i][1] if fn_t and i < len(fn_t.params) else None
                if kind == "cell":
                    rendered.append(cell_argument(a))
                else:
                    rendered.append(operand(a))
            return ", ".join(rendered)

        def captures_of(lam_caps) -> str:
            # by-value for everything except plain (non-heap) cells, whose
            # underlying object outlives the closure's invocation
            refs = [c for c in lam_caps
                    if isinstance(c, str)
                    and kinds.get(c) in ("cell", "local_cell") and c not in heap]
            if refs:
                return "=, " + ", ".join(f"&{c}" for c in refs)
            return "="

        def stmt(s, indent: int) -> None:
            pad = "  " * indent

            def line(text: str) -> None:
                out.append(pad + text)

            match s:
                case Bind(dest, op, args):
                    if op in _OPS:
                        a, b = (operand(x) for x in args)
                        ty = "bool" if op == "greater" else "double"
                        line(f"{ty} {dest} = {a} {_OPS[op]} {b};")
                    else:
                        ty = "Tree" if op in ("tree_left", "tree_right") else \
                            ("bool" if op == "tree_nonempty" else "double")
                        line(f"{ty} {dest} = "
                             f"{_TREE_FIELDS[op].format(operand(args[0]))};")
                case CellNew(dest, init):
                    if dest in heap:
                        line(f"auto {dest} = "
                             f"std::make_shared<double>({operand(init)});")
                    else:
                        line(f"double {dest} = {operand(init)};")
                case CellRead(dest, cell):
                    line(f"double {dest} = {cell_lvalue(cell)};")
                case CellAccum(cell, value):
                    line(f"{cell_lvalue(cell)} += {operand(value)};")
                case CellSet(cell, value):
                    line(f"{cell_lvalue(cell)} = {operand(value)};")
                case ClosureNew(dest, f, caps):
                    arity = self.fun_arity.get(dest, 0)
                    body_args = call_args(f, ["a0", "a1"][:arity], caps) \
                        if arity else call_args(f, [], caps)
                    if arity == 2:
                        line(f"kont1 {dest} = [{captures_of(caps)}]"
                             f"(double a0, double& a1) {{ {f}({body_args}); }};")
                    else:
                        line(f"kont {dest} = [{captures_of(caps)}] "
                             f"{{ {f}({body_args}); }};")
                case Call(target, args, indirect):
                    if indirect:
                        # a kont1 takes (double, double&): deref heap cells
                        rendered = [operand(a) if i == 0 else cell_argument(a)
                                    for i, a in enumerate(args)]
                        line(f"{target}({', '.join(rendered)});")
                    else:
                        line(f"{target}({call_args(target, args)});")
                case SlotRead(dest, slot):
                    line(f"kont {dest} = {slot};")
                case SlotSet(slot, value):
                    line(f"{slot} = {operand(value)};")
                case Cond(guard, then, orelse):
                    line(f"if ({guard}) {{")
                    for t in then:
                        stmt(t, indent + 1)
                    line("} else {")
                    for t in orelse:
                        stmt(t, indent + 1)
                    line("}")
                case Return(value):
                    line(f"return {operand(value)};")
                case _:
                    raise ValueError(f"cannot emit {s!r}")

        if fn.name == TAPE_END and not fn.body:
            out.append(self.signature(fn, ret) + " {}")
            return
        out.append(self.signature(fn, ret) + " {")
        for s in fn.body:
            stmt(s, 1)
        out.append("}")


def emit_c(prog: IRProgram) -> str:
    """Render the program as compilable C++-flavored source text."""
    em = _Emitter(prog)
    out: list[str] = []
    uses_fun = bool(em.fun_arity) or bool(prog.slots)
    uses_tree = any(k == "tree" for fn in prog.functions.values()
                    for _, k in fn.params)
    uses_heap = any(em.heap_cells.values())
    if uses_fun or uses_heap:
        out.append("#include <functional>")
        if uses_heap:
            out.append("#include <memory>")
        out.append("typedef std::function<void()> kont;")
        out.append("typedef std::function<void(double, double&)> kont1;")
        out.append("")
    if uses_tree:
        out.append("struct Tree {")
        out.append("  bool notEmpty; double value;")
        out.append("  const Tree* lp; const Tree* rp;")
        out.append("  Tree left() const "
                   "{ return lp ? *lp : Tree{false, 0, nullptr, nullptr}; }")
        out.append("  Tree right() const "
                   "{ return rp ? *rp : Tree{false, 0, nullptr, nullptr}; }")
        out.append("};")
        out.append("")
    for slot in prog.slots:
        out.append(f"static kont {slot} = []{{}};")
    if prog.slots:
        out.append("")

    names = [n for n in prog.functions if n != prog.entry]
    rets = {n: ("double" if _returns_value(prog.functions[n]) else "void")
            for n in prog.functions}

    for n in names:
        out.append(em.signature(prog.functions[n], rets[n]) + ";")
    if names:
        out.append("")

    order = names + [prog.entry]
    for i, n in enumerate(order):
        em.emit_function(prog.functions[n], rets[n], out)
        if i != len(order) - 1:
            out.append("")
    return "\n".join(out) + "\n"
