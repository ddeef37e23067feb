"""Truncated Taylor jets in one or two formal displacement variables.

A jet of order ``m`` stores the scaled Taylor coefficients
``c[a, b] = d1^a d2^b f / (a! b!)`` for ``a + b <= m`` in graded order
(total degree first), so truncating to a lower order is a prefix slice.
Coefficients may be python floats, complex numbers, or numpy arrays of a
common shape (the arithmetic below never inspects them).

Multiplication is the Leibniz rule; the derivative shift ``d(i)`` lowers the
order by one.  Binary operations between jets of different orders truncate to
the smaller order.
"""
from __future__ import annotations

import cmath
import math
from functools import lru_cache

import numpy as np

__all__ = [
    "Jet",
    "Jet1",
    "Jet2",
    "DivisionGuard",
    "DomainGuard",
    "OrderGuard",
    "EPS_DIV",
    "set_eps_div",
    "jet_arith",
    "jet_fn",
    "extract_derivative",
]

EPS_DIV = 1e-9


def set_eps_div(eps: float) -> None:
    """Set the process-wide guard threshold for division, log and sqrt."""
    global EPS_DIV
    if not eps > 0:
        raise ValueError("eps_div must be positive")
    EPS_DIV = float(eps)


class DivisionGuard(ArithmeticError):
    """Division by a jet whose leading coefficient is below the guard."""


class DomainGuard(ArithmeticError):
    """log/sqrt outside their domain."""


class OrderGuard(IndexError):
    """Multi-index beyond the jet order."""


class _Table:
    __slots__ = ("dim", "order", "index", "pos", "mul_pairs", "deriv", "fact")

    def __init__(self, dim, order):
        self.dim = dim
        self.order = order
        if dim == 1:
            index = [(k,) for k in range(order + 1)]
        else:
            index = [(d - b, b) for d in range(order + 1) for b in range(d + 1)]
        self.index = index
        self.pos = {a: i for i, a in enumerate(index)}
        self.mul_pairs = []
        for a in index:
            pairs = []
            for i, b in enumerate(index):
                rest = tuple(x - y for x, y in zip(a, b))
                if min(rest) >= 0:
                    pairs.append((i, self.pos[rest]))
            self.mul_pairs.append(pairs)
        # deriv[axis] = list of (source position, factor) for the order-1 jet
        self.deriv = []
        for axis in range(dim):
            src = []
            for a in index:
                if sum(a) > order - 1:
                    break
                up = list(a)
                up[axis] += 1
                src.append((self.pos[tuple(up)], a[axis] + 1))
            self.deriv.append(src)
        self.fact = [math.prod(math.factorial(x) for x in a) for a in index]


@lru_cache(maxsize=None)
def _table(dim: int, order: int) -> _Table:
    return _Table(dim, order)


def _new(c, dim, order):
    j = object.__new__(Jet)
    j.dim = dim
    j.order = order
    j.c = c
    return j


def _is_array(x):
    return isinstance(x, np.ndarray)


def _fn(name, x):
    if _is_array(x):
        return getattr(np, name)(x)
    if isinstance(x, complex):
        return getattr(cmath, name)(x)
    return getattr(math, name)(x)


class Jet:
    __slots__ = ("dim", "order", "c")

    def __init__(self, coeffs, dim: int = 1, order: int | None = None):
        coeffs = list(coeffs)
        if order is None:
            # infer from the number of coefficients
            n = len(coeffs)
            order = n - 1 if dim == 1 else int(round((math.sqrt(8 * n + 1) - 3) / 2))
        tab = _table(dim, order)
        if len(coeffs) != len(tab.index):
            raise ValueError(f"{len(coeffs)} coefficients do not fit a dim-{dim} jet of order {order}")
        self.dim = dim
        self.order = order
        self.c = coeffs

    # ---- construction -------------------------------------------------
    @classmethod
    def constant(cls, value, dim: int = 1, order: int = 0) -> "Jet":
        n = len(_table(dim, order).index)
        zero = value * 0
        return cls([value] + [zero] * (n - 1), dim, order)

    @classmethod
    def variable(cls, value, axis: int = 0, dim: int = 1, order: int = 1) -> "Jet":
        jet = cls.constant(value, dim, order)
        if order >= 1:
            unit = tuple(1 if i == axis else 0 for i in range(dim))
            jet.c[_table(dim, order).pos[unit]] = value * 0 + 1
        return jet

    @classmethod
    def from_dict(cls, coeffs: dict, dim: int, order: int) -> "Jet":
        tab = _table(dim, order)
        return cls([coeffs.get(a, 0.0) for a in tab.index], dim, order)

    # ---- access -------------------------------------------------------
    @property
    def value(self):
        return self.c[0]

    def __getitem__(self, multi_index):
        if isinstance(multi_index, int):
            multi_index = (multi_index,)
        tab = _table(self.dim, self.order)
        try:
            return self.c[tab.pos[tuple(multi_index)]]
        except KeyError:
            raise OrderGuard(f"index {multi_index} exceeds order {self.order}") from None

    def as_dict(self) -> dict:
        return dict(zip(_table(self.dim, self.order).index, self.c))

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise OrderGuard(f"cannot raise order {self.order} to {order}")
        return Jet(self.c[: len(_table(self.dim, order).index)], self.dim, order)

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.dim != self.dim:
                raise ValueError("jets of different dimension")
            if other.order == self.order:
                return self, other
            m = min(self.order, other.order)
            return self.truncate(m), other.truncate(m)
        return self, Jet.constant(other, self.dim, self.order)

    # ---- arithmetic ---------------------------------------------------
    def __neg__(self):
        return _new([-x for x in self.c], self.dim, self.order)

    def __add__(self, other):
        if not isinstance(other, Jet):
            c = list(self.c)
            c[0] = c[0] + other
            return _new(c, self.dim, self.order)
        a, b = self._coerce(other)
        return _new([x + y for x, y in zip(a.c, b.c)], a.dim, a.order)

    __radd__ = __add__

    def __sub__(self, other):
        if not isinstance(other, Jet):
            c = list(self.c)
            c[0] = c[0] - other
            return _new(c, self.dim, self.order)
        a, b = self._coerce(other)
        return _new([x - y for x, y in zip(a.c, b.c)], a.dim, a.order)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return _new([x * other for x in self.c], self.dim, self.order)
        a, b = self._coerce(other)
        if a.order == 0:
            return _new([a.c[0] * b.c[0]], a.dim, 0)
        ac, bc = a.c, b.c
        if a.dim == 1 and a.order >= 10 and not _is_array(ac[0]) and not _is_array(bc[0]):
            # long 1D jets: Cauchy product by convolution
            return Jet(np.convolve(ac, bc)[: a.order + 1].tolist(), 1, a.order)
        out = []
        for pairs in _table(a.dim, a.order).mul_pairs:
            s = 0
            for i, j in pairs:
                s = s + ac[i] * bc[j]
            out.append(s)
        return _new(out, a.dim, a.order)

    __rmul__ = __mul__

    def reciprocal(self, eps: float | None = None) -> "Jet":
        eps = EPS_DIV if eps is None else eps
        b0 = self.c[0]
        if (np.any(np.abs(b0) < eps) if _is_array(b0) else abs(b0) < eps):
            raise DivisionGuard(f"leading coefficient {b0!r} below {eps}")
        inv = 1.0 / b0
        if self.order == 0:
            return _new([inv], self.dim, 0)
        bc = self.c
        r = [inv]
        for pairs in _table(self.dim, self.order).mul_pairs[1:]:
            s = 0
            for i, j in pairs:
                if i != 0:
                    s = s + bc[i] * r[j]
            r.append(-inv * s)
        return _new(r, self.dim, self.order)

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            if np.any(np.abs(other) < EPS_DIV):
                raise DivisionGuard(f"division by {other!r}")
            return _new([x / other for x in self.c], self.dim, self.order)
        a, b = self._coerce(other)
        return a * b.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def powi(self, n: int) -> "Jet":
        n = int(n)
        if n < 0:
            return self.reciprocal().powi(-n)
        result = Jet.constant(self.c[0] * 0 + 1, self.dim, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __pow__(self, n):
        if isinstance(n, int) or (isinstance(n, float) and n.is_integer()):
            return self.powi(int(n))
        return (self.log() * n).exp()

    def d(self, axis: int = 0) -> "Jet":
        """Derivative along ``axis``; the result has order one less."""
        if self.order == 0:
            raise OrderGuard("cannot differentiate an order-0 jet")
        src = _table(self.dim, self.order).deriv[axis]
        return _new([self.c[i] * f for i, f in src], self.dim, self.order - 1)

    # ---- elementary functions ------------------------------------------
    def _compose(self, coeffs) -> "Jet":
        """sum_k coeffs[k] * (self - self.value)**k, by Horner's rule."""
        if self.order == 0:
            return Jet([coeffs[0]], self.dim, 0)
        delta = Jet([self.c[0] * 0] + self.c[1:], self.dim, self.order)
        acc = Jet.constant(coeffs[self.order], self.dim, self.order)
        for k in range(self.order - 1, -1, -1):
            acc = acc * delta + coeffs[k]
        return acc

    def exp(self):
        e = _fn("exp", self.c[0])
        return self._compose([e / math.factorial(k) for k in range(self.order + 1)])

    def log(self, eps: float | None = None):
        eps = EPS_DIV if eps is None else eps
        a0 = self.c[0]
        if isinstance(a0, complex) or np.any(np.real(a0) <= eps):
            raise DomainGuard(f"log of jet with leading coefficient {a0!r}")
        coeffs = [_fn("log", a0)]
        inv = 1.0 / a0
        p = inv
        for k in range(1, self.order + 1):
            coeffs.append((-1) ** (k + 1) * p / k)
            p = p * inv
        return self._compose(coeffs)

    def sqrt(self, eps: float | None = None):
        eps = EPS_DIV if eps is None else eps
        a0 = self.c[0]
        if isinstance(a0, complex) or np.any(np.real(a0) <= eps):
            raise DomainGuard(f"sqrt of jet with leading coefficient {a0!r}")
        s = _fn("sqrt", a0)
        coeffs = []
        binom = 1.0
        p = s
        for k in range(self.order + 1):
            coeffs.append(binom * p)
            binom *= (0.5 - k) / (k + 1)
            p = p / a0
        return self._compose(coeffs)

    def _trig(self, first):
        s, c = _fn("sin", self.c[0]), _fn("cos", self.c[0])
        cycle = [s, c, -s, -c] if first == "sin" else [c, -s, -c, s]
        return self._compose([cycle[k % 4] / math.factorial(k) for k in range(self.order + 1)])

    def sin(self):
        return self._trig("sin")

    def cos(self):
        return self._trig("cos")

    def __repr__(self):
        return f"Jet(dim={self.dim}, order={self.order}, c={self.c!r})"


def Jet1(coeffs) -> Jet:
    return Jet(coeffs, dim=1)


def Jet2(coeffs: dict, order: int) -> Jet:
    return Jet.from_dict(coeffs, dim=2, order=order)


def jet_arith(op: str, a: Jet, b: Jet) -> Jet:
    if a.dim != b.dim or a.order != b.order:
        raise ValueError("jet_arith needs jets of equal order and dimension")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    raise ValueError(f"unknown jet operation {op!r}")


def jet_fn(fn: str, a: Jet, n: int | None = None) -> Jet:
    if fn == "pow_int":
        if n is None:
            raise ValueError("pow_int needs an integer exponent")
        return a.powi(n)
    if fn not in ("exp", "log", "sin", "cos", "sqrt"):
        raise ValueError(f"unknown jet function {fn!r}")
    return getattr(a, fn)()


def extract_derivative(a: Jet, multi_index) -> float:
    """The true partial derivative: factorials restored."""
    if isinstance(multi_index, int):
        multi_index = (multi_index,)
    multi_index = tuple(multi_index)
    if len(multi_index) != a.dim:
        raise ValueError(f"multi-index {multi_index} does not match dimension {a.dim}")
    if sum(multi_index) > a.order:
        raise OrderGuard(f"index {multi_index} exceeds order {a.order}")
    return a[multi_index] * math.prod(math.factorial(x) for x in multi_index)
