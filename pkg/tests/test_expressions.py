import numpy as np
import pytest
import sympy

from cartan_kill.exceptions import MetricParseError
from cartan_kill.expressions import parse_expression, parse_matrix, variable_symbol


def test_evaluate_sphere_factor():
    """The stereographic conformal factor evaluates like numpy"""
    e = parse_expression("4/(1 + x1^2 + x2^2)^2")
    x = [0.5, -0.25]
    assert abs(e.evaluate(x) - 4 / (1 + 0.25 + 0.0625) ** 2) < 1e-15


def test_canonical_printing():
    """Printing is canonical and parses back to the same tree"""
    e = parse_expression("(x1+2)*x2 - (x1 - (x2 - 1))")
    text = str(e)
    assert text == "(x1 + 2) * x2 - (x1 - (x2 - 1))", text
    assert parse_expression(text) == e


def test_precedence_of_negation_and_power():
    """-x1^2 is the negated square"""
    e = parse_expression("-x1^2")
    assert e.evaluate([3.0]) == -9.0


def test_rational_exponent():
    """x1^(1/2) is the square root"""
    e = parse_expression("x1^(1/2)")
    assert sympy.simplify(e.to_sympy() - sympy.sqrt(variable_symbol(1))) == 0
    assert abs(e.evaluate([2.0]) - np.sqrt(2.0)) < 1e-15


def test_functions():
    """sin, cos, tan, exp, log and sqrt are available"""
    e = parse_expression("sin(x1) + cos(x1) + tan(x1) + exp(x1) + log(x1) + sqrt(x1)")
    x = 0.7
    expected = np.sin(x) + np.cos(x) + np.tan(x) + np.exp(x) + np.log(x) + np.sqrt(x)
    assert abs(e.evaluate([x]) - expected) < 1e-14


def test_syntax_error_carries_position():
    """Malformed text raises MetricParseError with its location"""
    with pytest.raises(MetricParseError) as info:
        parse_expression("x1 + * 2")
    assert info.value.line == 1
    assert info.value.column >= 3, info.value.column


def test_unknown_function():
    """Functions outside the grammar are rejected"""
    with pytest.raises(MetricParseError):
        parse_expression("cosh(x1)")


def test_symbolic_derivative_matches_finite_difference():
    """Exact differentiation agrees with central differences"""
    e = parse_expression("exp(x1) * sin(x2) / (1 + x1^2)")
    d = sympy.lambdify([variable_symbol(1), variable_symbol(2)], e.to_sympy().diff(variable_symbol(1)))
    x = np.array([0.3, 0.8])
    h = 1e-5
    fd = (e.evaluate(x + [h, 0]) - e.evaluate(x - [h, 0])) / (2 * h)
    assert abs(d(*x) - fd) / abs(fd) < 1e-8


def test_parse_matrix_shape():
    """Matrices parse row by row"""
    rows = parse_matrix("[[1, x1], [x1, 2]]")
    assert len(rows) == 2 and all(len(r) == 2 for r in rows)
    assert rows[0][1] == rows[1][0]


def test_division_after_integer_exponent():
    """x1^2/4 divides the square by four"""
    e = parse_expression("1 + x1^2/4")
    assert str(e) == "1 + x1^2 / 4", str(e)
    assert abs(e.evaluate([1.0]) - 1.25) < 1e-15
    assert sympy.simplify(e.to_sympy() - (1 + variable_symbol(1) ** 2 / 4)) == 0


def test_bare_rational_exponent_rejected():
    """A fractional exponent needs parentheses"""
    e = parse_expression("x1^2/3")
    assert abs(e.evaluate([3.0]) - 3.0) < 1e-15
    with pytest.raises(MetricParseError):
        parse_expression("x1^1/")


def test_exponents_are_exact_rationals():
    """Exponents stay exact through to sympy"""
    e = parse_expression("x1^(-3/2)")
    assert e.exponent == sympy.Rational(-3, 2)
    assert str(e) == "x1^(-3/2)"
    assert abs(e.evaluate([4.0]) - 0.125) < 1e-15
