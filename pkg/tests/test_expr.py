import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solbranch.expr import (
    BinOp,
    Call,
    Neg,
    Num,
    ParseError,
    Var,
    compile_expr,
    diff,
    eval_jet,
    eval_scalar,
    parse,
    pretty,
    variables,
)


def test_precedence_tree():
    e = parse("1 + 2*cos(theta)^2", ["theta"])
    assert e == BinOp("+", Num(1.0), BinOp("*", Num(2.0), BinOp("^", Call("cos", (Var("theta"),)), Num(2.0))))


def test_unknown_identifier_column():
    with pytest.raises(ParseError) as err:
        parse("cos(thteta)", ["theta"])
    assert err.value.column == 5
    assert "unknown identifier" in str(err.value)


def test_power_right_associative():
    assert eval_scalar(parse("2^3^2"), {}) == 512


def test_unary_minus_binds_looser_than_power():
    assert eval_scalar(parse("-2^2"), {}) == -4
    assert eval_scalar(parse("2^-1"), {}) == 0.5


@pytest.mark.parametrize("text", ["", "1 +", "(1", "sin(1, 2)", "foo(1)", "1 2", "2 * * 3"])
def test_malformed(text):
    with pytest.raises(ParseError):
        parse(text, ["x"])


def test_cos_jet():
    j = eval_jet(parse("cos(theta)", ["theta"]), {"theta": 0.0}, 4)
    assert j.c == pytest.approx([1, 0, -0.5, 0, 1 / 24])


def test_scalar_gaussian():
    e = parse("exp(-(x1^2+x2^2))", ["x1", "x2"])
    assert eval_scalar(e, {"x1": 1.0, "x2": 0.0}) == pytest.approx(math.exp(-1))


def test_two_dim_polynomial_jet():
    e = parse("x1*x2 + x1^2", ["x1", "x2"])
    j = eval_jet(e, {"x1": 0.0, "x2": 0.0}, 2, jet_vars=("x1", "x2"))
    assert j.as_dict() == {(0, 0): 0, (1, 0): 0, (0, 1): 0, (2, 0): 1, (1, 1): 1, (0, 2): 0}


def test_vectorized_eval():
    f = compile_expr(parse("r*cos(theta)", ["r", "theta"]))
    r = np.array([1.0, 2.0])
    assert f({"r": r, "theta": 0.0}) == pytest.approx([1.0, 2.0])


def test_variables():
    assert variables(parse("r + sin(theta) * 2", ["r", "theta"])) == {"r", "theta"}


def test_symbolic_diff():
    e = parse("sin(x)^2 / (1 + x^2)", ["x"])
    d = diff(e, "x")
    for x in (0.1, 0.7, -1.3):
        h = 1e-6
        fd = (eval_scalar(e, {"x": x + h}) - eval_scalar(e, {"x": x - h})) / (2 * h)
        assert eval_scalar(d, {"x": x}) == pytest.approx(fd, rel=1e-6)


leaf = st.one_of(st.sampled_from([Var("x"), Var("y")]),
                 st.floats(0.1, 9.0).map(lambda v: Num(round(v, 3))))


def _extend(children):
    return st.one_of(
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: BinOp(*t)),
        children.map(Neg),
        st.tuples(st.sampled_from(["sin", "cos", "exp"]), children).map(lambda t: Call(t[0], (t[1],))),
    )


@settings(max_examples=200, deadline=None)
@given(st.recursive(leaf, _extend, max_leaves=12))
def test_pretty_round_trip(e):
    assert parse(pretty(e), ["x", "y"]) == e
