import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from parastab.errors import ExprSyntaxError, NonDifferentiable
from parastab.expr import differentiate, parse_expr, to_string


@pytest.mark.parametrize("text, value", [
    ("2+3*4", 14.0),
    ("2^3^2", 512.0),
    ("-2^2", -4.0),
    ("2-3-4", -5.0),
    ("8/4/2", 1.0),
    ("(1 + 2) * 3", 9.0),
    ("  2 *pi ", 2 * math.pi),
    ("2^-1", 0.5),
    ("1e-3*1000", 1.0),
])
def test_precedence_and_associativity(text, value):
    assert parse_expr(text).evaluate(t=0.0, x1=0.0, x2=0.0) == pytest.approx(value)


def test_evaluation_at_points():
    assert parse_expr("2*x1^3 + x2^2")(x1=1.0, x2=2.0) == 6.0
    assert parse_expr("sin(t)")(t=0.0) == 0.0
    v = parse_expr("x1*x2 + t").evaluate(t=1.0, x1=np.array([1.0, 2.0]), x2=np.array([3.0, 4.0]))
    assert np.array_equal(v, [4.0, 9.0])


@pytest.mark.parametrize("text, var, expected", [
    ("2*x1^3", "x1", "6*x1^2"),
    ("(2*x1^3 + x2^2)*sin(t)", "t", "(2*x1^3 + x2^2)*cos(t)"),
    ("sin(t)", "x2", "0"),
])
def test_derivative_examples(text, var, expected):
    assert to_string(differentiate(parse_expr(text), var)) == expected


def test_abs_not_differentiable():
    with pytest.raises(NonDifferentiable):
        differentiate(parse_expr("abs(x1)"), "x1")
    assert to_string(differentiate(parse_expr("abs(x1)"), "t")) == "0"


@pytest.mark.parametrize("text, position", [("2+*3", 2), ("sin(x1", 6), ("x3", 0), ("2^x1", 2),
                                            ("", 0), ("1)", 1)])
def test_syntax_errors_carry_position(text, position):
    with pytest.raises(ExprSyntaxError) as info:
        parse_expr(text)
    assert info.value.position == position


def test_variables():
    assert parse_expr("x1*sin(t) + 3").variables() == {"x1", "t"}
    assert parse_expr("pi*2").variables() == set()


# grammar-generated expressions without abs and without division (keeps
# derivatives away from singularities)
leaves = st.one_of(st.sampled_from(["t", "x1", "x2"]),
                   st.integers(min_value=0, max_value=5).map(str),
                   st.sampled_from(["0.5", "1.25", "pi"]))


def _extend(children):
    return st.one_of(
        st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
            lambda p: f"({p[0]} {p[1]} {p[2]})"),
        st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda p: f"{p[0]}({p[1]})"),
        children.map(lambda c: f"-{c}"),
        st.tuples(children, st.integers(min_value=0, max_value=3)).map(lambda p: f"({p[0]})^{p[1]}"),
    )


exprs = st.recursive(leaves, _extend, max_leaves=8)
points = st.tuples(*[st.floats(min_value=-1, max_value=1)] * 3)


@settings(max_examples=200, deadline=None)
@given(exprs)
def test_print_parse_round_trip(text):
    e = parse_expr(text)
    printed = to_string(e)
    assert parse_expr(printed) == e
    assert to_string(parse_expr(printed)) == printed


@settings(max_examples=200, deadline=None)
@given(exprs, points, st.sampled_from(["t", "x1", "x2"]))
def test_derivative_matches_central_difference(text, point, var):
    e = parse_expr(text)
    env = dict(zip(("t", "x1", "x2"), point))
    h = 1e-6
    hi, lo = dict(env), dict(env)
    hi[var] += h
    lo[var] -= h
    fd = (e.evaluate(**hi) - e.evaluate(**lo)) / (2 * h)
    exact = differentiate(e, var).evaluate(**env)
    scale = max(1.0, abs(exact), abs(e.evaluate(**hi)), abs(e.evaluate(**lo)))
    assume(scale < 1e4)
    assert abs(fd - exact) <= 1e-6 * scale


def test_exp_and_quotient_derivatives():
    e = parse_expr("exp(2*x1)/(1 + x2^2)")
    d1 = differentiate(e, "x1").evaluate(x1=0.3, x2=0.7, t=0)
    d2 = differentiate(e, "x2").evaluate(x1=0.3, x2=0.7, t=0)
    assert d1 == pytest.approx(2 * math.exp(0.6) / 1.49)
    assert d2 == pytest.approx(-math.exp(0.6) * 1.4 / 1.49 ** 2)


def test_derivative_of_constant_power_at_zero():
    assert differentiate(parse_expr("(0)^0"), "t").evaluate(t=0, x1=0, x2=0) == 0.0
    assert differentiate(parse_expr("x1^0"), "x1").evaluate(t=0, x1=0, x2=0) == 0.0
