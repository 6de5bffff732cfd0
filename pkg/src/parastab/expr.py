"""A small arithmetic expression language over ``t``, ``x1``, ``x2``.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" intexp)?
    intexp := "-"? INT ("^" intexp)?
    atom   := NUMBER | "t" | "x1" | "x2" | "pi" | FUNC "(" expr ")" | "(" expr ")"

with ``FUNC`` one of ``sin cos exp abs``.  Exponents are integer literals so
symbolic differentiation stays inside the grammar.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import ExprSyntaxError, NonDifferentiable

VARIABLES = ("t", "x1", "x2")
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}


class Expr:
    def evaluate(self, **env):
        return _eval(self, env)

    def __call__(self, t=0.0, x1=0.0, x2=0.0):
        return _eval(self, {"t": t, "x1": x1, "x2": x2})

    def variables(self):
        out = set()
        _collect(self, out)
        return out

    def diff(self, var):
        return differentiate(self, var)

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True, eq=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, eq=True)
class Bin(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True, eq=True)
class Call(Expr):
    fn: str
    arg: Expr


ZERO = Num(0.0)
ONE = Num(1.0)

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))")


def _tokenize(text):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(pos, "a number, name or operator", text)
        start = m.start(m.lastgroup)
        tokens.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            raise ExprSyntaxError(pos, repr(value), self.text)

    def fail(self, expected):
        raise ExprSyntaxError(self.peek()[2], expected, self.text)

    def parse(self):
        if self.peek()[0] == "end":
            self.fail("an expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail("an operator or end of input")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            e = Bin(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            e = Bin(op, e, self.unary())
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return Pow(base, self.intexp())
        return base

    def intexp(self):
        sign = 1
        if self.peek()[1] == "-":
            self.take()
            sign = -1
        kind, val, pos = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ExprSyntaxError(pos, "an integer exponent", self.text)
        n = int(val)
        if self.peek()[1] == "^":
            self.take()
            n = n ** self.intexp()
            if not float(n).is_integer():
                raise ExprSyntaxError(pos, "an integer exponent", self.text)
            n = int(n)
        return sign * n

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in VARIABLES:
                return Var(val)
            if val == "pi":
                return Num(math.pi)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            raise ExprSyntaxError(pos, "t, x1, x2, pi or a function name", self.text)
        if val == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise ExprSyntaxError(pos, "a number, variable, function or '('", self.text)


def parse_expr(text):
    """Parse ``text`` into an :class:`Expr`."""
    if isinstance(text, Expr):
        return text
    if isinstance(text, (int, float)):
        return Num(float(text))
    return _Parser(str(text)).parse()


def _eval(e, env):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env.get(e.name, 0.0)
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Bin):
        a, b = _eval(e.left, env), _eval(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        return a / b
    if isinstance(e, Pow):
        base = _eval(e.base, env)
        if e.exponent < 0:
            return 1.0 / np.power(base, -e.exponent)
        return np.power(base, e.exponent)
    return FUNCTIONS[e.fn](_eval(e.arg, env))


def _collect(e, out):
    if isinstance(e, Var):
        out.add(e.name)
    elif isinstance(e, (Neg, Call)):
        _collect(e.arg, out)
    elif isinstance(e, Bin):
        _collect(e.left, out)
        _collect(e.right, out)
    elif isinstance(e, Pow):
        _collect(e.base, out)


# smart constructors: constant folding and 0/1 elimination only

def add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return Bin("+", a, b)


def sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    return Bin("-", a, b)


def mul(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(b, Num):
        a, b = b, a
    if isinstance(a, Num) and isinstance(b, Bin) and b.op == "*" and isinstance(b.left, Num):
        return mul(Num(a.value * b.left.value), b.right)
    return Bin("*", a, b)


def div(a, b):
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0:
        return Num(a.value / b.value)
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Bin("/", a, b)


def neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def power(a, n):
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Num):
        return Num(a.value ** n)
    return Pow(a, n)


def differentiate(e, var):
    """Symbolic derivative of ``e`` with respect to ``var``."""
    if var not in VARIABLES:
        raise ValueError(f"unknown variable {var!r}")
    return _d(e, var)


def _d(e, var):
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return neg(_d(e.arg, var))
    if isinstance(e, Bin):
        da, db = _d(e.left, var), _d(e.right, var)
        if e.op == "+":
            return add(da, db)
        if e.op == "-":
            return sub(da, db)
        if e.op == "*":
            return add(mul(da, e.right), mul(e.left, db))
        return div(sub(mul(da, e.right), mul(e.left, db)), power(e.right, 2))
    if isinstance(e, Pow):
        inner = _d(e.base, var)
        # a constant power needs no chain rule (and 0^(n-1) may not exist)
        if e.exponent == 0 or inner == ZERO:
            return ZERO
        return mul(mul(Num(float(e.exponent)), power(e.base, e.exponent - 1)), inner)
    inner = _d(e.arg, var)
    if inner == ZERO:
        return ZERO
    if e.fn == "sin":
        return mul(Call("cos", e.arg), inner)
    if e.fn == "cos":
        return mul(neg(Call("sin", e.arg)), inner)
    if e.fn == "exp":
        return mul(e, inner)
    raise NonDifferentiable(f"abs({to_string(e.arg)}) depends on {var}")


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e):
    if isinstance(e, Bin):
        return _PREC[e.op]
    if isinstance(e, Neg) or (isinstance(e, Num) and e.value < 0):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _num(v):
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def to_string(e):
    """Render with the minimal parentheses needed to parse back identically."""
    if isinstance(e, Num):
        return _num(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = to_string(e.arg)
        return "-" + (f"({inner})" if _prec(e.arg) < 3 else inner)
    if isinstance(e, Pow):
        base = to_string(e.base)
        if _prec(e.base) < 5:
            base = f"({base})"
        return f"{base}^{e.exponent}"
    p = _PREC[e.op]
    left = to_string(e.left)
    right = to_string(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    sep = f" {e.op} " if p == 1 else e.op
    return f"{left}{sep}{right}"
