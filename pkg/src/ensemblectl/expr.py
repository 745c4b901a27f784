"""Scalar expressions of time ``t`` and parameter components ``b1 .. bd``.

Matrix entries in system configurations are written as text such as
``"-sin(b*t)"`` and parsed here into an immutable syntax tree.  Evaluation
accepts scalars or numpy arrays for ``t`` so that a coefficient can be
tabulated on a whole time grid in one call.

Grammar, loosest binding first::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import (ExprSyntaxError, NonFiniteResult, ParamIndexOutOfRange,
                     UnknownIdentifier)

__all__ = ["Num", "Var", "Neg", "BinOp", "Call", "Expression", "parse",
           "evaluate", "FUNCTIONS"]

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str  # "t", "pi" or "b<i>"


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


# precedence levels used by the printer
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def _fmt(node):
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.func}({_fmt(node.arg)})"
    if isinstance(node, Neg):
        inner = _fmt(node.operand)
        if _prec(node.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return "-" + inner
    p = _PREC[node.op]
    left = _fmt(node.left)
    right = _fmt(node.right)
    if node.op == "^":
        if _prec(node.left) <= p:
            left = f"({left})"
        # the exponent is parsed as a unary expression, so Neg needs no parens
        if _prec(node.right) < _PREC["neg"]:
            right = f"({right})"
    else:
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
    return f"{left}{node.op}{right}"


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


def _tokenize(source):
    pos = 0
    tokens = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {source[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source, param_dim):
        self.tokens = _tokenize(source)
        self.i = 0
        self.param_dim = param_dim

    @property
    def tok(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.tok
        if value != text or kind == "end":
            raise ExprSyntaxError("unexpected " + (repr(value) if kind != "end" else "end of input"),
                                  pos, repr(text))
        self.advance()

    def parse(self):
        node = self.expr()
        kind, value, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected {value!r}", pos, "operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.tok[0] == "op" and self.tok[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.tok
        if kind == "num":
            self.advance()
            x = float(value)
            if not math.isfinite(x):
                raise ExprSyntaxError(f"literal {value!r} overflows", pos)
            return Num(x)
        if kind == "name":
            self.advance()
            if self.tok[1] == "(" and self.tok[0] == "op":
                if value not in FUNCTIONS:
                    raise UnknownIdentifier(value, pos)
                self.advance()
                arg = self.expr()
                self.expect(")")
                return Call(value, arg)
            if value in FUNCTIONS:
                self.expect("(")
            return self.variable(value, pos)
        if kind == "op" and value == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(value)
        raise ExprSyntaxError(f"unexpected {what}", pos, "number, name or '('")

    def variable(self, name, pos):
        if name in ("t", "pi"):
            return Var(name)
        if name == "b":
            if self.param_dim != 1:
                raise UnknownIdentifier(name, pos)
            return Var("b1")
        m = re.fullmatch(r"b([1-9][0-9]*)", name)
        if m:
            index = int(m.group(1))
            if index > self.param_dim:
                raise ParamIndexOutOfRange(name, index, self.param_dim)
            return Var(name)
        raise UnknownIdentifier(name, pos)


def _eval(node, t, beta):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        if node.name == "t":
            return t
        if node.name == "pi":
            return CONSTANTS["pi"]
        return beta[int(node.name[1:]) - 1]
    if isinstance(node, Neg):
        return -_eval(node.operand, t, beta)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](_eval(node.arg, t, beta))
    a = _eval(node.left, t, beta)
    b = _eval(node.right, t, beta)
    op = node.op
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return np.divide(a, b)
    if np.ndim(b) == 0 and float(b).is_integer():
        return np.power(np.float64(a) if np.ndim(a) == 0 else a, int(b))
    # negative base with a fractional exponent gives nan here
    return np.power(a, b)


def _collect(node, out):
    if isinstance(node, Var):
        out.add(node.name)
    elif isinstance(node, Neg):
        _collect(node.operand, out)
    elif isinstance(node, Call):
        _collect(node.arg, out)
    elif isinstance(node, BinOp):
        _collect(node.left, out)
        _collect(node.right, out)


@dataclass(frozen=True)
class Expression:
    """Parsed expression; equality is structural."""

    node: object
    param_dim: int = 1

    def eval(self, t, beta=(), strict=False):
        """Evaluate at time ``t`` (scalar or array) and parameter vector ``beta``.

        Division by zero, overflow and invalid powers yield non-finite values;
        with ``strict=True`` they raise :class:`NonFiniteResult` instead.
        """
        beta = np.atleast_1d(np.asarray(beta, dtype=float))
        scalar = np.ndim(t) == 0
        t = np.float64(t) if scalar else np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            value = _eval(self.node, t, np.float64(0.0) + beta)
            if scalar:
                value = float(value)
            else:
                value = np.broadcast_to(np.asarray(value, dtype=float), t.shape).copy()
        if strict and not np.all(np.isfinite(value)):
            raise NonFiniteResult(f"{self} is not finite at t={t!r}, beta={beta.tolist()!r}")
        return value

    @property
    def variables(self):
        out = set()
        _collect(self.node, out)
        return frozenset(out)

    @property
    def depends_on_time(self):
        return "t" in self.variables

    def __str__(self):
        return _fmt(self.node)


def parse(source, param_dim=1):
    """Parse ``source`` into an :class:`Expression` over ``param_dim`` parameters."""
    if not isinstance(source, str):
        source = repr(float(source))
    if not source.strip():
        raise ExprSyntaxError("empty expression", 0, "expression")
    if param_dim < 1:
        raise ValueError("param_dim must be positive")
    return Expression(_Parser(source, param_dim).parse(), param_dim)


def evaluate(expr, t, beta, strict=False):
    return expr.eval(t, beta, strict=strict)
