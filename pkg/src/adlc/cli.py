"""Command-line entry point: parse/eval/anf/transform/grad/check/codegen/
descend/demo over S-expression program files.

Every subcommand is a thin adapter over the library; exit code 0 on
success, 1 on a program error (parse/eval/usage), 2 on a check failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import gradcheck
from .emit import emit_c
from .forward import fwd_transform, grad_forward_tagged
from .gradcheck import (
    CorpusSpec, DEFAULT_PROBES, ProgramGradients, check_program, crosscheck,
    gradient_descent, report_json, report_line,
)
from .interp import eval_expr, render_value
from .ir_eval import ir_eval
from .ir_opt import ir_optimize
from .lang import anf, desugar, freshen
from .reverse import (
    grad_reverse_of_reverse, rev_transform_full_cps, rev_transform_meta_shift,
    rev_transform_target_shift,
)
from .runtime import dual_fn
from .staging import stage_reverse, stage_tree, parse_tree
from .syntax import LangError, Lam, NameGen, all_names, fmt_float, parse, pretty

GRAD_MODES = ("forward", "dual", "cps", "tape", "functional",
              "reverse-target-shift", "reverse-meta-shift", "reverse-cps-full",
              "staged", "forward2", "reverse2")
TRANSFORM_MODES = ("forward", "reverse-target-shift", "reverse-meta-shift",
                   "reverse-cps-full")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _probes(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _read_program(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adlc", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("parse", help="parse and reprint a program")
    sp.add_argument("file")

    sp = sub.add_parser("eval", help="evaluate a program")
    sp.add_argument("file")

    sp = sub.add_parser("anf", help="A-normal form of an arithmetic program")
    sp.add_argument("file")

    sp = sub.add_parser("transform", help="print a differentiated program")
    sp.add_argument("--mode", choices=TRANSFORM_MODES, required=True)
    sp.add_argument("file")

    sp = sub.add_parser("grad", help="gradient of a one-argument lam")
    sp.add_argument("--mode", choices=GRAD_MODES, required=True)
    sp.add_argument("--at", default="1.0", help="comma-separated probe list")
    sp.add_argument("--tree", help="tree input file for staged tree folds")
    sp.add_argument("--depth-limit", type=int, default=None)
    sp.add_argument("file")

    sp = sub.add_parser("check", help="cross-check gradient formulations")
    sp.add_argument("--at", default=None, help="comma-separated probe list")
    sp.add_argument("--h", type=float, default=None, help="finite-difference step")
    sp.add_argument("--tol", type=float, default=1e-4, help="finite-difference tolerance")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--json", action="store_true")
    sp.add_argument("file", nargs="?", help="check one program instead of the corpus")

    sp = sub.add_parser("codegen", help="stage, optimize and emit C-like text")
    sp.add_argument("--opt", choices=("none", "all"), default="all")
    sp.add_argument("--tree", help="treat the program as a tree-fold body")
    sp.add_argument("-o", "--output", default=None)
    sp.add_argument("file")

    sp = sub.add_parser("descend", help="gradient descent demo")
    sp.add_argument("--rate", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--at", default="0.0", help="starting point")
    sp.add_argument("--mode", choices=GRAD_MODES, default="reverse-meta-shift")
    sp.add_argument("file")

    sub.add_parser("demo", help="run the worked examples and print a table")
    return p


def _grad_at(args, f, x: float) -> float:
    mode = args.mode
    if args.tree and mode != "staged":
        raise LangError("--tree is only meaningful with --mode staged")
    if mode == "forward2":
        return grad_forward_tagged(dual_fn(f), x, order=2)
    if mode == "reverse2":
        return grad_reverse_of_reverse(f, x)
    if mode == "staged" and args.tree:
        prog = stage_tree(f)
        tree = parse_tree(open(args.tree, encoding="utf-8").read())
        return ir_eval(prog, x, tree=tree, depth_limit=args.depth_limit)
    if mode == "staged":
        return ir_eval(stage_reverse(f), x, depth_limit=args.depth_limit)
    pg = ProgramGradients(f)
    return pg.grad(mode, x)


def run(argv: list[str]) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except LangError as ex:
        print(f"adlc: error: {ex}", file=sys.stderr)
        return 1
    except OSError as ex:
        print(f"adlc: error: {ex}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    cmd = args.cmd
    if cmd == "parse":
        print(pretty(_read_program(args.file)))
    elif cmd == "eval":
        e = _read_program(args.file)
        gen = NameGen(all_names(e))
        v, store = eval_expr(freshen(desugar(e, gen), gen))
        print(render_value(v, store))
    elif cmd == "anf":
        e = _read_program(args.file)
        if isinstance(e, Lam):
            print(pretty(Lam(e.param, anf(e.body))))
        else:
            print(pretty(anf(e)))
    elif cmd == "transform":
        e = _read_program(args.file)
        gen = NameGen(all_names(e))
        e = freshen(desugar(e, gen), gen)
        t = {
            "forward": fwd_transform,
            "reverse-target-shift": rev_transform_target_shift,
            "reverse-meta-shift": rev_transform_meta_shift,
            "reverse-cps-full": rev_transform_full_cps,
        }[args.mode]
        print(pretty(t(e, gen)))
    elif cmd == "grad":
        f = _read_program(args.file)
        for x in _probes(args.at):
            print(fmt_float(_grad_at(args, f, x)))
    elif cmd == "check":
        return _check(args)
    elif cmd == "codegen":
        f = _read_program(args.file)
        prog = stage_tree(f) if args.tree else stage_reverse(f)
        if args.opt == "all":
            prog = ir_optimize(prog)
        text = emit_c(prog)
        if args.output:
            with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            print(text, end="")
    elif cmd == "descend":
        f = _read_program(args.file)
        x0 = _probes(args.at)[0]
        traj = gradient_descent(f, x0, args.rate, args.steps, mode=args.mode)
        for i, (x, fx) in enumerate(traj):
            print(f"{i}\t{fmt_float(x)}\t{fmt_float(fx)}")
    elif cmd == "demo":
        _demo()
    return 0


def _check(args) -> int:
    probes = _probes(args.at) if args.at else list(DEFAULT_PROBES)
    if args.file:
        f = _read_program(args.file)
        reports = check_program(f, 0, probes, args.h, args.tol)
    else:
        spec = CorpusSpec(seed=args.seed)
        reports = crosscheck(spec, probes, args.h, args.tol)
    if args.json:
        print(json.dumps([report_json(r) for r in reports], indent=2))
    else:
        for r in reports:
            print(report_line(r))
    return 0 if all(r.passed for r in reports) else 2


def _demo() -> None:
    from .runtime import perturbation_confusion_probe

    cubic = parse("(lam x (+ (* 2.0 x) (* (* x x) x)))")
    pg = ProgramGradients(cubic)
    probes = (-2.0, -1.0, 0.0, 1.0, 2.0)
    print("gradients of 2x + x^3 (analytic 2 + 3x^2):")
    header = ["x"] + list(gradcheck.ALL_MODES) + ["analytic"]
    print("\t".join(header))
    for x in probes:
        row = [fmt_float(x)]
        row += [fmt_float(pg.grad(m, x)) for m in gradcheck.ALL_MODES]
        row.append(fmt_float(2 + 3 * x * x))
        print("\t".join(row))

    print("\nsecond order (analytic 6x):")
    dual_f = dual_fn(cubic)
    for x in probes:
        f2 = grad_forward_tagged(dual_f, x, order=2)
        r2 = grad_reverse_of_reverse(cubic, x)
        print(f"{fmt_float(x)}\tforward2={fmt_float(f2)}\treverse2={fmt_float(r2)}"
              f"\tanalytic={fmt_float(6 * x)}")

    naive, tagged = perturbation_confusion_probe()
    print(f"\nnested-gradient probe: naive inner = {fmt_float(naive)} "
          f"(confused), tagged inner = {fmt_float(tagged)} (correct)")

    ife = parse("(lam x (if (> x 0.0) (* (* -1.0 x) x) (* x x)))")
    whf = parse("(lam x (letrec loop (lam t (if (> t 1.0) (app loop (* t 0.5)) t))"
                " (app loop x)))")
    body = parse("(* (* l r) v)")
    tree = parse_tree("(node 3.0 (leaf) (leaf))")
    print("\nstaged control flow:")
    print(f"if example @ +-2: {fmt_float(ir_eval(stage_reverse(ife), 2.0))},"
          f" {fmt_float(ir_eval(stage_reverse(ife), -2.0))} (expect -4)")
    print(f"while example @ 8: {fmt_float(ir_eval(stage_reverse(whf), 8.0))}"
          f" (expect 0.125)")
    print(f"tree example @ 2, v=3: {fmt_float(ir_eval(stage_tree(body), 2.0, tree=tree))}"
          f" (expect 12)")

    quad = parse("(lam x (+ (+ (* x x) (* -6.0 x)) 9.0))")
    traj = gradient_descent(quad, 0.0, 0.1, 100)
    print(f"\ngradient descent on (x-3)^2 from 0, rate 0.1, 100 steps:"
          f" final x = {fmt_float(traj[-1][0])}")


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
