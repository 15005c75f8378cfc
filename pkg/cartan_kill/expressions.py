"""Metric expression language.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' exponent)?
    exponent := signed_integer | '(' signed_rational ')'
    base   := number | variable | func '(' expr ')' | '(' expr ')'
    func   := sin | cos | tan | exp | log | sqrt
    variable := 'x' digit+

Parsed text becomes a small AST; ``str`` prints it back canonically and
``to_sympy`` hands it to sympy for exact differentiation.
"""
import logging
from functools import lru_cache
from typing import List, Sequence

import numpy as np
import pyparsing as pp
import sympy

from cartan_kill.exceptions import MetricParseError

logger = logging.getLogger(__name__)

FUNCTIONS = {
    "sin": (sympy.sin, np.sin),
    "cos": (sympy.cos, np.cos),
    "tan": (sympy.tan, np.tan),
    "exp": (sympy.exp, np.exp),
    "log": (sympy.log, np.log),
    "sqrt": (sympy.sqrt, np.sqrt),
}

PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}
NEG_PRECEDENCE = 3
POW_PRECEDENCE = 4
ATOM_PRECEDENCE = 5


def variable_symbol(index: int) -> sympy.Symbol:
    return sympy.Symbol(f"x{index}", real=True)


class Expression:
    precedence = ATOM_PRECEDENCE

    def to_sympy(self) -> sympy.Expr:
        raise NotImplementedError

    def evaluate(self, x: Sequence[float]) -> float:
        raise NotImplementedError

    def variables(self) -> set:
        return set()

    def _key(self) -> tuple:
        raise NotImplementedError

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self._key() == other._key()

    def __hash__(self) -> int:
        return hash((type(self).__name__, self._key()))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({str(self)!r})"


class Number(Expression):
    def __init__(self, text: str):
        self.text = text
        self.value = float(text)

    def __str__(self) -> str:
        if self.value.is_integer() and "e" not in self.text.lower():
            return str(int(self.value))
        return repr(self.value)

    def _key(self) -> tuple:
        return (self.value,)

    def to_sympy(self) -> sympy.Expr:
        return sympy.Rational(self.text)

    def evaluate(self, x: Sequence[float]) -> float:
        return self.value


class Variable(Expression):
    def __init__(self, index: int):
        self.index = index

    def __str__(self) -> str:
        return f"x{self.index}"

    def _key(self) -> tuple:
        return (self.index,)

    def variables(self) -> set:
        return {self.index}

    def to_sympy(self) -> sympy.Expr:
        return variable_symbol(self.index)

    def evaluate(self, x: Sequence[float]) -> float:
        return x[self.index - 1]


class Call(Expression):
    def __init__(self, func: str, arg: Expression):
        self.func = func
        self.arg = arg

    def __str__(self) -> str:
        return f"{self.func}({self.arg})"

    def _key(self) -> tuple:
        return (self.func, self.arg)

    def variables(self) -> set:
        return self.arg.variables()

    def to_sympy(self) -> sympy.Expr:
        return FUNCTIONS[self.func][0](self.arg.to_sympy())

    def evaluate(self, x: Sequence[float]) -> float:
        return FUNCTIONS[self.func][1](self.arg.evaluate(x))


class Neg(Expression):
    precedence = NEG_PRECEDENCE

    def __init__(self, operand: Expression):
        self.operand = operand

    def __str__(self) -> str:
        inner = str(self.operand)
        if self.operand.precedence < NEG_PRECEDENCE:
            inner = f"({inner})"
        return f"-{inner}"

    def _key(self) -> tuple:
        return (self.operand,)

    def variables(self) -> set:
        return self.operand.variables()

    def to_sympy(self) -> sympy.Expr:
        return -self.operand.to_sympy()

    def evaluate(self, x: Sequence[float]) -> float:
        return -self.operand.evaluate(x)


class Power(Expression):
    precedence = POW_PRECEDENCE

    def __init__(self, base: Expression, exponent: sympy.Rational):
        self.base = base
        self.exponent = exponent

    def __str__(self) -> str:
        base = str(self.base)
        if self.base.precedence < ATOM_PRECEDENCE:
            base = f"({base})"
        if self.exponent.q == 1 and self.exponent >= 0:
            return f"{base}^{self.exponent.p}"
        return f"{base}^({self.exponent})"

    def _key(self) -> tuple:
        return (self.base, self.exponent)

    def variables(self) -> set:
        return self.base.variables()

    def to_sympy(self) -> sympy.Expr:
        return self.base.to_sympy() ** self.exponent

    def evaluate(self, x: Sequence[float]) -> float:
        return self.base.evaluate(x) ** float(self.exponent)


class BinaryOp(Expression):
    def __init__(self, op: str, left: Expression, right: Expression):
        self.op = op
        self.left = left
        self.right = right
        self.precedence = PRECEDENCE[op]

    def __str__(self) -> str:
        left = str(self.left)
        right = str(self.right)
        if self.left.precedence < self.precedence:
            left = f"({left})"
        # left-associative grammar: equal precedence on the right needs parentheses
        if self.right.precedence <= self.precedence:
            right = f"({right})"
        return f"{left} {self.op} {right}"

    def _key(self) -> tuple:
        return (self.op, self.left, self.right)

    def variables(self) -> set:
        return self.left.variables() | self.right.variables()

    def to_sympy(self) -> sympy.Expr:
        a = self.left.to_sympy()
        b = self.right.to_sympy()
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b

    def evaluate(self, x: Sequence[float]) -> float:
        a = self.left.evaluate(x)
        b = self.right.evaluate(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        return a / b


def _fold_binary(tokens):
    items = tokens[0] if len(tokens) == 1 and isinstance(tokens[0], pp.ParseResults) else tokens
    result = items[0]
    for i in range(1, len(items), 2):
        result = BinaryOp(items[i], result, items[i + 1])
    return result


def _power(tokens):
    if len(tokens) == 1:
        return tokens[0]
    return Power(tokens[0], tokens[1])


@lru_cache(maxsize=1)
def _grammar():
    LPAR, RPAR = map(pp.Suppress, "()")
    number = pp.Regex(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?").set_name("number")
    number.set_parse_action(lambda t: Number(t[0]))
    variable = pp.Regex(r"x\d+").set_name("variable")
    variable.set_parse_action(lambda t: Variable(int(t[0][1:])))
    func = pp.one_of(list(FUNCTIONS), as_keyword=True).set_name("function")

    # a bare exponent stops before any "/": x1^2/4 is (x1^2)/4
    integer = pp.Regex(r"[+-]?\d+").set_name("signed integer")
    rational = pp.Regex(r"[+-]?\d+(/\d+)?").set_name("signed rational")
    for token in (integer, rational):
        token.set_parse_action(lambda t: sympy.Rational(t[0]))
    exponent = integer | (LPAR + rational + RPAR)

    expr = pp.Forward().set_name("expression")
    call = (func + LPAR + expr + RPAR).set_parse_action(lambda t: Call(t[0], t[1]))
    base = call | number | variable | (LPAR + expr + RPAR)

    factor = pp.Forward()
    powered = (base + pp.Optional(pp.Suppress("^") + exponent)).set_parse_action(_power)
    negated = (pp.Suppress("-") + factor).set_parse_action(lambda t: Neg(t[0]))
    factor <<= negated | powered

    term = (factor + pp.ZeroOrMore(pp.one_of("* /") + factor)).set_parse_action(_fold_binary)
    expr <<= (term + pp.ZeroOrMore(pp.one_of("+ -") + term)).set_parse_action(_fold_binary)

    row = pp.Group(pp.Suppress("[") + pp.DelimitedList(expr) + pp.Suppress("]"))
    matrix = pp.Suppress("[") + pp.DelimitedList(row) + pp.Suppress("]")
    return expr, matrix


def _raise_parse_error(text: str, e: pp.ParseBaseException):
    logger.error(f"Failed to parse metric expression: {e}")
    raise MetricParseError(f"Syntax error: {e.msg}", position=e.loc, line=e.lineno, column=e.col)


def parse_expression(text: str) -> Expression:
    expr, _ = _grammar()
    try:
        return expr.parse_string(text, parse_all=True)[0]
    except pp.ParseBaseException as e:
        _raise_parse_error(text, e)


def parse_matrix(text: str) -> List[List[Expression]]:
    """Parse '[[e11, e12], [e21, e22]]'"""
    _, matrix = _grammar()
    try:
        rows = matrix.parse_string(text, parse_all=True)
    except pp.ParseBaseException as e:
        _raise_parse_error(text, e)
    return [list(row) for row in rows]
