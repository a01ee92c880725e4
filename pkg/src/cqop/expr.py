"""Symbolic expressions for scale factors: parse, differentiate, evaluate.

Supports real literals, named variables, + - * /, unary minus, integer
powers, and the functions sin, cos, tan, exp, log, sqrt.  Derivatives are
exact (no finite differencing), which is what keeps curvature and the
geometric potential free of discretization error downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Add", "Sub", "Mul", "Div", "Neg", "Pow", "Call",
    "ExprError", "SyntaxExprError", "UnknownFunctionError",
    "UnboundVariableError", "DomainError",
    "parse", "differentiate", "evaluate", "substitute", "variables",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt")


class ExprError(Exception):
    """Base class for expression errors."""


class SyntaxExprError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownFunctionError(SyntaxExprError):
    pass


class UnboundVariableError(ExprError):
    pass


class DomainError(ExprError):
    """Evaluation hit a singular point; carries the offending node."""

    def __init__(self, message, node):
        super().__init__(f"{message} in {node}")
        self.node = node


@dataclass(frozen=True)
class Expr:
    def __str__(self):
        return _to_str(self, 0)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Sub(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    arg: Expr


# ---------------------------------------------------------------------------
# constructors with literal constant folding
# ---------------------------------------------------------------------------

def _is_num(e, v=None):
    return isinstance(e, Num) and (v is None or e.value == v)


def add(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value + b.value)
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return Add(a, b)


def sub(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value - b.value)
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a, b):
    if _is_num(a) and _is_num(b):
        return Num(a.value * b.value)
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return Mul(a, b)


def div(a, b):
    if _is_num(a) and _is_num(b) and b.value != 0.0:
        return Num(a.value / b.value)
    if _is_num(a, 0.0):
        return Num(0.0)
    if _is_num(b, 1.0):
        return a
    return Div(a, b)


def neg(a):
    if _is_num(a):
        return Num(-a.value)
    return Neg(a)


def power(base, exponent):
    if exponent == 0:
        return Num(1.0)
    if exponent == 1:
        return base
    if _is_num(base):
        return Num(base.value ** exponent)
    return Pow(base, exponent)


# ---------------------------------------------------------------------------
# parser: expr := term (('+'|'-') term)* ; term := unary (('*'|'/') unary)* ;
# unary := '-' unary | pow ; pow := atom ('^' int)? ; standard precedence,
# left association, power binds tighter than unary minus.
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, message):
        raise SyntaxExprError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            self.error(f"expected '{ch}'")
        self.pos += 1

    def parse(self):
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error("unexpected trailing input")
        return e

    def expr(self):
        e = self.term()
        while True:
            c = self.peek()
            if c == "+":
                self.pos += 1
                e = Add(e, self.term())
            elif c == "-":
                self.pos += 1
                e = Sub(e, self.term())
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            c = self.peek()
            if c == "*":
                self.pos += 1
                e = Mul(e, self.unary())
            elif c == "/":
                self.pos += 1
                e = Div(e, self.unary())
            else:
                return e

    def unary(self):
        if self.peek() == "-":
            self.pos += 1
            return Neg(self.unary())
        return self.pow()

    def pow(self):
        e = self.atom()
        if self.peek() == "^":
            self.pos += 1
            e = Pow(e, self.integer())
        return e

    def integer(self):
        self.skip_ws()
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        token = self.text[start:self.pos]
        if not token or token == "-":
            self.error("expected integer exponent")
        return int(token)

    def atom(self):
        c = self.peek()
        if c == "(":
            self.pos += 1
            e = self.expr()
            self.expect(")")
            return e
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha() or c == "_":
            return self.identifier()
        self.error("expected number, variable, or '('")

    def number(self):
        self.skip_ws()
        start = self.pos
        seen_dot = seen_exp = False
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch.isdigit():
                self.pos += 1
            elif ch == "." and not seen_dot and not seen_exp:
                seen_dot = True
                self.pos += 1
            elif ch in "eE" and not seen_exp and self.pos > start:
                seen_exp = True
                self.pos += 1
                if self.pos < len(self.text) and self.text[self.pos] in "+-":
                    self.pos += 1
            else:
                break
        try:
            return Num(float(self.text[start:self.pos]))
        except ValueError:
            self.pos = start
            self.error("malformed number")

    def identifier(self):
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == "_"):
            self.pos += 1
        name = self.text[start:self.pos]
        if self.peek() == "(":
            if name not in FUNCTIONS:
                self.pos = start
                raise UnknownFunctionError(f"unknown function '{name}'", start)
            self.pos += 1
            arg = self.expr()
            self.expect(")")
            return Call(name, arg)
        return Var(name)


def parse(text):
    """Parse an expression string into an AST."""
    if not text or not text.strip():
        raise SyntaxExprError("empty expression", 0)
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# printing (round-trip stable: parse(str(e)) == parse(str(parse(str(e)))))
# ---------------------------------------------------------------------------

_PREC = {"add": 1, "mul": 2, "neg": 3, "pow": 4, "atom": 5}


def _to_str(e, parent_prec):
    if isinstance(e, Num):
        s = repr(e.value)
        if e.value < 0:
            return f"({s})"
        return s
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({_to_str(e.arg, 0)})"
    if isinstance(e, Add):
        s = f"{_to_str(e.a, _PREC['add'])} + {_to_str(e.b, _PREC['add'] + 1)}"
        prec = _PREC["add"]
    elif isinstance(e, Sub):
        s = f"{_to_str(e.a, _PREC['add'])} - {_to_str(e.b, _PREC['add'] + 1)}"
        prec = _PREC["add"]
    elif isinstance(e, Mul):
        s = f"{_to_str(e.a, _PREC['mul'])}*{_to_str(e.b, _PREC['mul'] + 1)}"
        prec = _PREC["mul"]
    elif isinstance(e, Div):
        s = f"{_to_str(e.a, _PREC['mul'])}/{_to_str(e.b, _PREC['mul'] + 1)}"
        prec = _PREC["mul"]
    elif isinstance(e, Neg):
        s = f"-{_to_str(e.a, _PREC['neg'])}"
        prec = _PREC["neg"]
    elif isinstance(e, Pow):
        s = f"{_to_str(e.base, _PREC['pow'] + 1)}^{e.exponent}"
        prec = _PREC["pow"]
    else:
        raise TypeError(f"not an Expr: {e!r}")
    if prec < parent_prec:
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# differentiation, evaluation, substitution
# ---------------------------------------------------------------------------

def differentiate(e, var):
    """Exact symbolic derivative d(e)/d(var).

    Variables absent from the expression differentiate to zero; `var` must
    be a valid identifier.
    """
    if not var or not (var[0].isalpha() or var[0] == "_") or not all(c.isalnum() or c == "_" for c in var):
        raise UnboundVariableError(f"not a valid variable name: {var!r}")
    return _diff(e, var)


def _diff(e, var):
    if isinstance(e, Num):
        return Num(0.0)
    if isinstance(e, Var):
        return Num(1.0) if e.name == var else Num(0.0)
    if isinstance(e, Add):
        return add(_diff(e.a, var), _diff(e.b, var))
    if isinstance(e, Sub):
        return sub(_diff(e.a, var), _diff(e.b, var))
    if isinstance(e, Neg):
        return neg(_diff(e.a, var))
    if isinstance(e, Mul):
        return add(mul(_diff(e.a, var), e.b), mul(e.a, _diff(e.b, var)))
    if isinstance(e, Div):
        num = sub(mul(_diff(e.a, var), e.b), mul(e.a, _diff(e.b, var)))
        return div(num, power(e.b, 2))
    if isinstance(e, Pow):
        inner = _diff(e.base, var)
        return mul(mul(Num(float(e.exponent)), power(e.base, e.exponent - 1)), inner)
    if isinstance(e, Call):
        u = e.arg
        du = _diff(u, var)
        rules = {
            "sin": lambda: Call("cos", u),
            "cos": lambda: neg(Call("sin", u)),
            "tan": lambda: add(Num(1.0), power(Call("tan", u), 2)),
            "exp": lambda: Call("exp", u),
            "log": lambda: div(Num(1.0), u),
            "sqrt": lambda: div(Num(0.5), Call("sqrt", u)),
        }
        return mul(rules[e.func](), du)
    raise TypeError(f"not an Expr: {e!r}")


def evaluate(e, bindings):
    """Evaluate at a variable binding (floats or numpy arrays).

    Raises UnboundVariableError for free variables not in `bindings` and
    DomainError at singular points (division by zero, log of a non-positive
    value, sqrt of a negative value), naming the offending node.
    """
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return bindings[e.name]
        except KeyError:
            raise UnboundVariableError(f"unbound variable '{e.name}'") from None
    if isinstance(e, Add):
        return evaluate(e.a, bindings) + evaluate(e.b, bindings)
    if isinstance(e, Sub):
        return evaluate(e.a, bindings) - evaluate(e.b, bindings)
    if isinstance(e, Neg):
        return -evaluate(e.a, bindings)
    if isinstance(e, Mul):
        return evaluate(e.a, bindings) * evaluate(e.b, bindings)
    if isinstance(e, Div):
        d = evaluate(e.b, bindings)
        if np.any(d == 0):
            raise DomainError("division by zero", e)
        return evaluate(e.a, bindings) / d
    if isinstance(e, Pow):
        base = evaluate(e.base, bindings)
        if e.exponent < 0 and np.any(base == 0):
            raise DomainError("zero raised to negative power", e)
        return base ** float(e.exponent) if e.exponent >= 0 else base ** float(e.exponent)
    if isinstance(e, Call):
        v = evaluate(e.arg, bindings)
        if e.func == "log":
            if np.any(v <= 0):
                raise DomainError("log of non-positive value", e)
            return np.log(v) if isinstance(v, np.ndarray) else math.log(v)
        if e.func == "sqrt":
            if np.any(v < 0):
                raise DomainError("sqrt of negative value", e)
            return np.sqrt(v) if isinstance(v, np.ndarray) else math.sqrt(v)
        fn = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp}[e.func]
        out = fn(v)
        return out if isinstance(v, np.ndarray) else float(out)
    raise TypeError(f"not an Expr: {e!r}")


def substitute(e, var, value):
    """Replace a variable by a numeric literal, folding constants."""
    if isinstance(e, (Num,)):
        return e
    if isinstance(e, Var):
        return Num(float(value)) if e.name == var else e
    if isinstance(e, Add):
        return add(substitute(e.a, var, value), substitute(e.b, var, value))
    if isinstance(e, Sub):
        return sub(substitute(e.a, var, value), substitute(e.b, var, value))
    if isinstance(e, Mul):
        return mul(substitute(e.a, var, value), substitute(e.b, var, value))
    if isinstance(e, Div):
        return div(substitute(e.a, var, value), substitute(e.b, var, value))
    if isinstance(e, Neg):
        return neg(substitute(e.a, var, value))
    if isinstance(e, Pow):
        return power(substitute(e.base, var, value), e.exponent)
    if isinstance(e, Call):
        return Call(e.func, substitute(e.arg, var, value))
    raise TypeError(f"not an Expr: {e!r}")


def variables(e):
    """Set of free variable names."""
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, (Add, Sub, Mul, Div)):
        return variables(e.a) | variables(e.b)
    if isinstance(e, Neg):
        return variables(e.a)
    if isinstance(e, Pow):
        return variables(e.base)
    if isinstance(e, Call):
        return variables(e.arg)
    raise TypeError(f"not an Expr: {e!r}")
