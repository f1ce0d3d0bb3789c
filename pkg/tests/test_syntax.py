import pytest
from hypothesis import given, strategies as st

from adlc.syntax import (
    Add, App, Case, Const, Expr, Greater, If, Inl, Lam, Let, Letrec, Mul,
    ParseError, Pair, Ref, Seq, Shift, Unit, Var, all_names, fmt_float,
    node_count, parse, pretty,
)


def test_parse_mul():
    assert parse("(* 2.0 x)") == Mul(Const(2.0), Var("x"))


def test_parse_let():
    assert parse("(let y (* x x) y)") == Let("y", Mul(Var("x"), Var("x")), Var("y"))


def test_parse_unknown_form():
    with pytest.raises(ParseError, match="unknown form"):
        parse("(foo x)")


def test_parse_sugar_preserved():
    e = parse("(if (> x 0.0) x (seq x x))")
    assert isinstance(e, If)
    assert isinstance(e.orelse, Seq)
    e = parse("(letrec f (lam t t) (app f x))")
    assert isinstance(e, Letrec)


def test_parse_unit_and_sums():
    e = parse("(case (inl ()) a 1.0 b 2.0)")
    assert e == Case(Inl(Unit()), "a", Const(1.0), "b", Const(2.0))


def test_parse_error_position():
    with pytest.raises(ParseError) as ei:
        parse("(+ 1.0\n  @)")
    assert ei.value.line == 2


def test_parse_comments():
    assert parse("; leading\n(+ 1.0 2.0) ; trailing") == Add(Const(1.0), Const(2.0))


def test_parse_float_shapes():
    for text, v in [("1", 1.0), ("-0.5", -0.5), ("1e3", 1000.0),
                    ("+2.5E-2", 0.025), (".5", 0.5)]:
        assert parse(text) == Const(v)


def test_parse_trailing_input_rejected():
    with pytest.raises(ParseError, match="trailing"):
        parse("1.0 2.0")


def test_pretty_shift():
    assert pretty(parse("(shift k (app k 1.0))")) == "(shift k (app k 1))"


def test_pretty_round_trip_examples():
    for src in [
        "(* 2.0 x)",
        "(lam x (+ (* 2.0 x) (* (* x x) x)))",
        "(reset (+ 1.0 (shift k (app k (app k 1.0)))))",
        "(let r (ref 0.0) (seq (assign r 2.0) (deref r)))",
        "(case (inr ()) a (fst (pair a a)) b (snd (pair b b)))",
        "(letrec f (lam t (if (> t 1.0) (app f (* t 0.5)) t)) (app f x))",
    ]:
        e = parse(src)
        assert parse(pretty(e)) == e


# Random expression trees for the round-trip law.
_names = st.sampled_from(["x", "y", "z", "k", "acc'"])


def _exprs() -> st.SearchStrategy[Expr]:
    leaf = st.one_of(
        st.floats(allow_nan=False, allow_infinity=False,
                  min_value=-1e6, max_value=1e6).map(Const),
        _names.map(Var),
        st.just(Unit()),
    )

    def extend(children):
        return st.one_of(
            st.tuples(children, children).map(lambda t: Add(*t)),
            st.tuples(children, children).map(lambda t: Mul(*t)),
            st.tuples(children, children).map(lambda t: Greater(*t)),
            st.tuples(_names, children).map(lambda t: Lam(*t)),
            st.tuples(children, children).map(lambda t: App(*t)),
            st.tuples(_names, children, children).map(lambda t: Let(*t)),
            st.tuples(children, children).map(lambda t: Pair(*t)),
            st.tuples(children, children, children).map(lambda t: If(*t)),
            st.tuples(children, children).map(lambda t: Seq(*t)),
            st.tuples(_names, children).map(lambda t: Shift(*t)),
            children.map(Ref),
        )

    return st.recursive(leaf, extend, max_leaves=25)


@given(_exprs())
def test_round_trip_random(e):
    assert parse(pretty(e)) == e


def test_node_count():
    assert node_count(parse("(+ x 1.0)")) == 3
    assert node_count(parse("(lam x x)")) == 2


def test_all_names_includes_binders():
    e = parse("(lam q (let w x w))")
    assert all_names(e) == {"q", "w", "x"}


def test_fmt_float():
    assert fmt_float(5.0) == "5"
    assert fmt_float(0.5) == "0.5"
    assert fmt_float(-2.0) == "-2"
    # shortest form always round-trips
    for v in (0.1, 1e100, 3.141592653589793, -1e-12, 2.0):
        assert float(fmt_float(v)) == v


def test_round_trip_corpus_programs():
    from adlc.gradcheck import CorpusSpec, random_program

    spec = CorpusSpec(count=50)
    for i in range(spec.count):
        e = random_program(spec, i)
        assert parse(pretty(e)) == e
