"""Arithmetic expressions for initial data, sources and weights.

Grammar (``^`` binds tighter than unary minus, which binds tighter than
``*``/``/``, then ``+``/``-``; ``^`` is right associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr (',' expr)* ')' | '(' expr ')'

The same tree evaluates on python scalars, numpy arrays and :class:`Jet`
values.  :func:`diff` gives symbolic partial derivatives, which the
reference oracles use as a route independent of jets.
"""
from __future__ import annotations

import cmath
import functools
import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .jets import DomainGuard, Jet

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ParseError",
    "parse",
    "pretty",
    "eval_scalar",
    "eval_jet",
    "compile_expr",
    "diff",
    "variables",
    "FUNCTIONS",
]

FUNCTIONS = {"sin": 1, "cos": 1, "exp": 1, "log": 1, "sqrt": 1, "powi": 2}


class Expr:
    __slots__ = ()

    def __str__(self):
        return pretty(self)


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    args: tuple


class ParseError(ValueError):
    def __init__(self, message: str, column: int, text: str = ""):
        self.column = column
        self.text = text
        super().__init__(f"{message} at column {column}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            # skip whitespace to report the offending character
            while pos < n and text[pos].isspace():
                pos += 1
            if pos >= n:
                break
            raise ParseError(f"unexpected character {text[pos]!r}", pos + 1, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    tokens.append(("end", "", n + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, allowed: frozenset):
        self.text = text
        self.allowed = allowed
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, col = self.advance()
        if text != value or kind not in ("op",):
            got = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, got {got}", col, self.text)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, col = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected {text!r}", col, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, col = self.advance()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", col, self.text)
                self.advance()
                args = [self.expr()]
                while self.peek()[1] == ",":
                    self.advance()
                    args.append(self.expr())
                kind2, text2, col2 = self.advance()
                if text2 != ")":
                    got = "end of input" if kind2 == "end" else repr(text2)
                    raise ParseError(f"expected ')', got {got}", col2, self.text)
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(
                        f"{text} takes {FUNCTIONS[text]} argument(s), got {len(args)}", col, self.text
                    )
                return Call(text, tuple(args))
            if text not in self.allowed:
                raise ParseError(f"unknown identifier {text!r}", col, self.text)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        got = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"unexpected {got}", col, self.text)


def parse(text: str, allowed_vars: Iterable[str] = ()) -> Expr:
    if not isinstance(text, str):
        raise TypeError("expression must be a string")
    return _Parser(text, frozenset(allowed_vars)).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def pretty(e: Expr) -> str:
    """Minimal-parenthesis rendering; ``parse(pretty(e)) == e`` for parsed trees."""
    return _pretty(e)[0]


def _pretty(e):
    # returns (text, precedence of the top-level construct)
    if isinstance(e, Num):
        v = e.value
        s = repr(float(v)) if not float(v).is_integer() or abs(v) >= 1e16 else str(int(v))
        if v < 0:
            return f"({s})", 5
        return s, 5
    if isinstance(e, Var):
        return e.name, 5
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(pretty(a) for a in e.args)})", 5
    if isinstance(e, Neg):
        s, p = _pretty(e.arg)
        # unary minus sits between ^ and */
        if p < 3:
            s = f"({s})"
        return f"-{s}", 3
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        ls, lp = _pretty(e.left)
        rs, rp = _pretty(e.right)
        if e.op == "^":
            if lp <= 4:
                ls = f"({ls})"
            if rp < 3:
                rs = f"({rs})"
        else:
            if lp < p:
                ls = f"({ls})"
            if rp <= p:
                rs = f"({rs})"
        return f"{ls} {e.op} {rs}" if e.op != "^" else f"{ls}^{rs}", p
    raise TypeError(f"not an expression: {e!r}")


def variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, BinOp):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        out = set()
        for a in e.args:
            out |= variables(a)
        return out
    raise TypeError(e)


# ---- evaluation --------------------------------------------------------

def _scalar_fn(name):
    def f(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        if isinstance(x, np.ndarray):
            return getattr(np, name)(x)
        if isinstance(x, complex):
            return getattr(cmath, name)(x)
        if name in ("log", "sqrt") and x <= 0:
            if name == "sqrt" and x == 0:
                return 0.0
            raise DomainGuard(f"{name}({x})")
        return getattr(math, name)(x)

    return f


_FNS = {name: _scalar_fn(name) for name in ("sin", "cos", "exp", "log", "sqrt")}


def _powi(x, n):
    if isinstance(n, Jet):
        n = n.value
    if isinstance(n, np.ndarray):
        raise ValueError("powi exponent must be a scalar")
    if float(n) != int(n):
        raise ValueError(f"powi exponent must be an integer, got {n}")
    n = int(n)
    if isinstance(x, Jet):
        return x.powi(n)
    return x**n


def _pow(a, b):
    if isinstance(b, Jet):
        if b.order == 0 or all(_is_zero(c) for c in b.c[1:]):
            b = b.value
        else:
            return (b * _FNS["log"](a)).exp()
    if isinstance(a, Jet):
        return a**b
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.power(a, b)
    return a**b


def _is_zero(c):
    return np.all(np.asarray(c) == 0)


@functools.lru_cache(maxsize=1024)
def compile_expr(e: Expr):
    """Compile to a closure ``f(env) -> value`` (env maps variable names)."""
    if isinstance(e, Num):
        v = e.value
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise KeyError(f"variable {name!r} is not bound") from None

        return var
    if isinstance(e, Neg):
        f = compile_expr(e.arg)
        return lambda env: -f(env)
    if isinstance(e, BinOp):
        l, r = compile_expr(e.left), compile_expr(e.right)
        op = e.op
        if op == "+":
            return lambda env: l(env) + r(env)
        if op == "-":
            return lambda env: l(env) - r(env)
        if op == "*":
            return lambda env: l(env) * r(env)
        if op == "/":
            return lambda env: l(env) / r(env)
        if isinstance(e.right, Num) and float(e.right.value).is_integer():
            n = int(e.right.value)
            return lambda env: _powi(l(env), n)
        return lambda env: _pow(l(env), r(env))
    if isinstance(e, Call):
        if e.fn == "powi":
            a, n = compile_expr(e.args[0]), compile_expr(e.args[1])
            return lambda env: _powi(a(env), n(env))
        f = _FNS[e.fn]
        a = compile_expr(e.args[0])
        return lambda env: f(a(env))
    raise TypeError(e)


def eval_scalar(e: Expr, bindings: Mapping):
    """Evaluate on scalars (or numpy arrays, element-wise)."""
    return compile_expr(e)(bindings)


def eval_jet(e: Expr, base_point: Mapping, order: int, jet_vars=("theta",)) -> Jet:
    """Jet of ``e`` at ``base_point`` in the displacement of ``jet_vars``.

    ``jet_vars`` lists the variables seeded as formal displacements, in axis
    order; every other variable is held at its base value.
    """
    dim = len(jet_vars)
    env = {}
    for name, value in base_point.items():
        if name in jet_vars:
            env[name] = Jet.variable(value, jet_vars.index(name), dim, order)
        else:
            env[name] = value
    for name in jet_vars:
        if name not in env:
            raise KeyError(f"variable {name!r} is not bound")
    out = compile_expr(e)(env)
    if not isinstance(out, Jet):
        out = Jet.constant(out, dim, order)
    return out


# ---- symbolic derivative ------------------------------------------------

ZERO, ONE = Num(0.0), Num(1.0)


def _add(a, b):
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return BinOp("+", a, b)


def _sub(a, b):
    if b == ZERO:
        return a
    if a == ZERO:
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return BinOp("*", a, b)


def _div(a, b):
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return BinOp("/", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def diff(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative with light constant folding."""
    if isinstance(e, Num):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == var else ZERO
    if isinstance(e, Neg):
        return _neg(diff(e.arg, var))
    if isinstance(e, BinOp):
        a, b = e.left, e.right
        da, db = diff(a, var), diff(b, var)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if e.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), BinOp("^", b, Num(2.0)))
        if e.op == "^":
            if var not in variables(b):
                # a^c -> c * a^(c-1) * a'
                if isinstance(b, Num):
                    lower = BinOp("^", a, Num(b.value - 1.0))
                else:
                    lower = BinOp("^", a, BinOp("-", b, ONE))
                return _mul(_mul(b, lower), da)
            # a^b = exp(b log a)
            return _mul(e, _add(_mul(db, Call("log", (a,))), _mul(b, _div(da, a))))
    if isinstance(e, Call):
        if e.fn == "powi":
            a, n = e.args
            return diff(BinOp("^", a, n), var)
        (a,) = e.args
        da = diff(a, var)
        if da == ZERO:
            return ZERO
        if e.fn == "sin":
            return _mul(Call("cos", (a,)), da)
        if e.fn == "cos":
            return _mul(_neg(Call("sin", (a,))), da)
        if e.fn == "exp":
            return _mul(e, da)
        if e.fn == "log":
            return _div(da, a)
        if e.fn == "sqrt":
            return _div(da, _mul(Num(2.0), e))
    raise TypeError(e)
