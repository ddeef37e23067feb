"""Normalized Green-kernel densities for the configuration-space TOKAM engine.

With ``K(z) = (1/2pi) log|z|`` and a positive weight ``h``, the densities

    rho(x, y)   = |K(x-y)| h(y) / N(x)
    rho_i(x, y) = |d_i K(x-y)| h(y) / N_i(x)
    rho_d(x, y) = |K + delta|(x-y) h(y) / N_d(x)

turn the kernel integrals into samplings.  ``delta`` is a unit atom at
``y = x``, so ``N_d = N + h(x)``.  Only radial weights ``h(y) = w(|y|)`` with
an exponential tail are catalogued.

Integrals are done in polar coordinates ``y = x + r e_phi`` around ``x``:
the log singularity becomes the integrable ``r |log r|`` and ``|d_i K|``
becomes the bounded ``|e_phi,i| / 2pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "RadialWeight",
    "H_CATALOG",
    "get_weight",
    "KernelNormalizations",
    "kernel_normalizations",
    "KernelSampler",
    "QuadratureError",
    "SamplerError",
    "kernel_sign",
]


class QuadratureError(ArithmeticError):
    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialWeight:
    """``h(y) = w(|y|)``; ``w`` unimodal with mode ``mode`` and tail ``~ exp(-u)``."""

    name: str
    w: Callable
    dlogw: Callable  # w'(u)/w(u)
    mode: float
    tail: float = 48.0  # beyond this distance w < 1e-19

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.w(np.hypot(y[..., 0], y[..., 1]))

    def at(self, x1: float, x2: float) -> float:
        return float(self.w(math.hypot(x1, x2)))

    def grad_log(self, x1: float, x2: float):
        """(d_1 log h, d_2 log h) at x."""
        r = math.hypot(x1, x2)
        if r == 0.0:
            if self.name == "default":
                raise ZeroDivisionError("d log h is singular at the origin for the default weight")
            return 0.0, 0.0
        g = float(self.dlogw(r))
        return g * x1 / r, g * x2 / r


def _w_default(u):
    return u * np.exp(-u)


def _w_sech(u):
    # 1/cosh without overflow
    e = np.exp(-np.abs(u))
    return 2.0 * e / (1.0 + e * e)


H_CATALOG = {
    "default": RadialWeight("default", _w_default, lambda u: 1.0 / u - 1.0, 1.0),
    "sech": RadialWeight("sech", _w_sech, lambda u: -np.tanh(u), 0.0),
}


def get_weight(h) -> RadialWeight:
    if isinstance(h, RadialWeight):
        return h
    try:
        return H_CATALOG[h or "default"]
    except KeyError:
        raise ValueError(f"unknown weight {h!r}; choose from {sorted(H_CATALOG)}") from None


def kernel_sign(x, y) -> int:
    """sign K(x - y) = sign log|x - y|."""
    return -1 if math.hypot(x[0] - y[0], x[1] - y[1]) < 1.0 else 1


# ---- quadrature ------------------------------------------------------------

_GL = {n: np.polynomial.legendre.leggauss(n) for n in (8, 12, 16, 24, 32)}


def _panel_rule(edges, n):
    x, w = _GL[n]
    a, b = np.asarray(edges[:-1]), np.asarray(edges[1:])
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * x
    weights = half[:, None] * w
    return nodes.ravel(), weights.ravel()


def _geometric(a, b, toward, levels, ratio=0.25):
    """Breakpoints on [a, b] refined geometrically toward ``a`` or ``b``."""
    pts = [a, b]
    width = b - a
    for i in range(1, levels + 1):
        d = width * ratio ** i
        pts.append(a + d if toward == "a" else b - d)
    return sorted(set(pts))


def _radial_edges(R, tail):
    """Breakpoints in r: 0 (r log r), 1 (|log r| kink), R (circle through the origin)."""
    special = sorted({1.0, R} - {0.0})
    base = [0.0] + [s for s in special if s > 0] + [max(R, 1.0) + d for d in (1.0, 4.0, 12.0, 25.0, tail)]
    base = sorted(set(base))
    edges = []
    for a, b in zip(base[:-1], base[1:]):
        seg = [a, b]
        if a == 0.0:
            seg = _geometric(a, b, "a", 6)
        if a in special and a > 0:
            seg = sorted(set(seg) | set(_geometric(a, b, "a", 4)))
        if b in special:
            seg = sorted(set(seg) | set(_geometric(a, b, "b", 4)))
        edges.extend(seg if not edges else seg[1:])
    return np.array(edges)


def _angular_edges(levels, kinks):
    """Breakpoints in psi on [-pi, pi]; geometric toward both ends, plus kinks."""
    pts = {-math.pi, 0.0, math.pi}
    for i in range(1, levels + 1):
        d = math.pi * 0.5 ** i
        pts.add(math.pi - d)
        pts.add(-math.pi + d)
    for k in kinks:
        pts.add(k)
    return np.array(sorted(pts))


def _wrap(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def _integrate(weight: RadialWeight, x, n):
    """(N, N1, N2) with ``n`` Gauss nodes per panel."""
    x1, x2 = float(x[0]), float(x[1])
    R = math.hypot(x1, x2)
    alpha = math.atan2(x2, x1)
    r_nodes, r_w = _panel_rule(_radial_edges(R, weight.tail), n)
    # psi = phi - alpha; kinks of |cos phi| and |sin phi|
    kinks = [_wrap(k - alpha) for k in (0.5 * math.pi, -0.5 * math.pi, 0.0, math.pi)]
    kinks = [k for k in kinks if abs(abs(k) - math.pi) > 1e-12]
    if R > 0:
        delta = np.abs(r_nodes - R) / R
        levels = np.clip(np.ceil(np.log2(1.0 / np.maximum(delta, 1e-14))).astype(int) + 1, 1, 48)
    else:
        levels = np.ones_like(r_nodes, dtype=int)
    tot = np.zeros(3)
    for lev in np.unique(levels):
        sel = levels == lev
        psi, pw = _panel_rule(_angular_edges(int(lev), kinks), n)
        rr = r_nodes[sel][:, None]
        phi = psi[None, :] + alpha
        u = np.sqrt(np.maximum(R * R + rr * rr + 2.0 * R * rr * np.cos(psi)[None, :], 0.0))
        hv = weight.w(u)
        ang = hv @ pw
        c = np.abs(np.cos(phi)) * hv @ pw
        s = np.abs(np.sin(phi)) * hv @ pw
        r = rr[:, 0]
        rw = r_w[sel]
        with np.errstate(divide="ignore", invalid="ignore"):
            rlog = np.where(r > 0, r * np.abs(np.log(r)), 0.0)
        tot += np.array([np.sum(rw * rlog * ang), np.sum(rw * c), np.sum(rw * s)])
    return tot / (2.0 * math.pi)


@dataclass(frozen=True)
class KernelNormalizations:
    N: float
    N1: float
    N2: float
    N_delta: float
    h: float
    error: float

    def __iter__(self):
        return iter((self.N, self.N1, self.N2, self.N_delta))


def kernel_normalizations(h, x, tol: float = 1e-6) -> KernelNormalizations:
    """(N, N1, N2, N_delta) at ``x`` with a panel Gauss-Legendre polar rule.

    The error estimate is the change between 8 and 12 nodes per panel; a
    relative change above ``tol`` raises :class:`QuadratureError`.
    """
    weight = get_weight(h)
    coarse = _integrate(weight, x, 8)
    fine = _integrate(weight, x, 12)
    err = float(np.max(np.abs(fine - coarse) / np.abs(fine)))
    if not np.all(np.isfinite(fine)) or err > tol:
        raise QuadratureError(f"kernel normalization did not converge (relative change {err:.3g})",
                              estimate=tuple(fine), error=err)
    hx = weight.at(x[0], x[1])
    return KernelNormalizations(float(fine[0]), float(fine[1]), float(fine[2]), float(fine[0]) + hx, hx, err)


def _fast_normalizations(weight: RadialWeight, x) -> KernelNormalizations:
    v = _integrate(weight, x, 8)
    if not np.all(np.isfinite(v)) or not np.all(v > 0):
        raise QuadratureError("kernel normalization failed", estimate=tuple(v))
    hx = weight.at(x[0], x[1])
    return KernelNormalizations(float(v[0]), float(v[1]), float(v[2]), float(v[0]) + hx, hx, float("nan"))


# ---- sampling --------------------------------------------------------------

def _rlog_max(a, b):
    """max of r |log r| over each bin [a, b] (vectorized)."""
    def f(r):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, r * np.abs(np.log(np.where(r > 0, r, 1.0))), 0.0)
    m = np.maximum(f(a), f(b))
    return np.where((a < 1.0 / math.e) & (1.0 / math.e < b), np.maximum(m, 1.0 / math.e), m)


class _Envelope:
    """Piecewise-constant radial majorant of the polar density around one x."""

    __slots__ = ("edges", "cdf", "heights", "total")

    def __init__(self, edges, heights):
        self.edges = edges
        self.heights = heights
        mass = heights * np.diff(edges)
        self.total = float(mass.sum())
        self.cdf = np.cumsum(mass) / self.total

    def draw(self, u1, u2):
        i = int(np.searchsorted(self.cdf, u1, side="right"))
        i = min(i, self.cdf.size - 1)
        a, b = self.edges[i], self.edges[i + 1]
        return a + u2 * (b - a), self.heights[i]


class KernelSampler:
    """Sampler and normalization cache for one weight ``h``.

    Queries are memoized on a 1e-9 grid of x.  Inserts are idempotent, so a
    shared cache gives schedule-independent results.
    """

    MAX_PROPOSALS = 1_000_000
    _MAX_CACHE = 200_000

    def __init__(self, h="default", tol: float = 1e-6, checked: bool = False):
        self.weight = get_weight(h)
        self.tol = tol
        # checked=False uses the single 8-node rule (relative error ~1e-9,
        # pinned by the test suite) instead of the 8/12 comparison
        self.checked = checked
        self._norm = {}
        self._env = {}

    @staticmethod
    def _key(x):
        return (round(x[0] * 1e9), round(x[1] * 1e9))

    def normalizations(self, x) -> KernelNormalizations:
        key = self._key(x)
        v = self._norm.get(key)
        if v is None:
            if len(self._norm) > self._MAX_CACHE:
                self._norm.clear()
            if self.checked:
                v = kernel_normalizations(self.weight, x, self.tol)
            else:
                v = _fast_normalizations(self.weight, x)
            self._norm[key] = v
        return v

    def h(self, x) -> float:
        return self.weight.at(x[0], x[1])

    def _envelopes(self, x):
        key = self._key(x)
        env = self._env.get(key)
        if env is None:
            if len(self._env) > self._MAX_CACHE:
                self._env.clear()
            env = self._build_envelopes(x)
            self._env[key] = env
        return env

    def _build_envelopes(self, x):
        R = math.hypot(x[0], x[1])
        w, mode = self.weight.w, self.weight.mode
        near = np.linspace(0.0, R + 4.0, int(math.ceil((R + 4.0) / 0.05)) + 1)
        far = np.linspace(R + 4.0, R + self.weight.tail, 90)[1:]
        edges = np.concatenate([near, far])
        a, b = edges[:-1], edges[1:]
        lo = np.where((a <= R) & (R <= b), 0.0, np.minimum(np.abs(a - R), np.abs(b - R)))
        hmax = w(np.clip(mode, lo, b + R))
        rlog = _rlog_max(a, b)
        return _Envelope(edges, rlog * hmax), _Envelope(edges, hmax)

    def sample(self, s, x, which: str = "rho"):
        """Draw ``(y, sign)`` from the named density at ``x``."""
        if which == "rho_delta":
            nz = self.normalizations(x)
            if nz.h > 0.0 and s.uniform() * nz.N_delta < nz.h:
                return (float(x[0]), float(x[1])), 1
            which = "rho"
        env_k, env_i = self._envelopes(x)
        w = self.weight.w
        x1, x2 = float(x[0]), float(x[1])
        for _ in range(self.MAX_PROPOSALS):
            if which == "rho":
                r, bound = env_k.draw(s.uniform(), s.uniform())
                phi = 2.0 * math.pi * s.uniform()
                c, sn = math.cos(phi), math.sin(phi)
                y1, y2 = x1 + r * c, x2 + r * sn
                target = (r * abs(math.log(r)) if r > 0 else 0.0) * float(w(math.hypot(y1, y2)))
                if s.uniform() * bound < target:
                    return (y1, y2), (-1 if r < 1.0 else 1)
            elif which in ("rho_1", "rho_2"):
                r, bound = env_i.draw(s.uniform(), s.uniform())
                # phi with density |cos phi|/4 (rho_1) or |sin phi|/4 (rho_2)
                v = 2.0 * s.uniform() - 1.0
                base = math.asin(abs(v)) * (1 if v >= 0 else -1)
                phi = base if s.uniform() < 0.5 else math.pi - base
                if which == "rho_2":
                    phi += 0.5 * math.pi
                c, sn = math.cos(phi), math.sin(phi)
                y1, y2 = x1 + r * c, x2 + r * sn
                if s.uniform() * bound < float(w(math.hypot(y1, y2))):
                    comp = c if which == "rho_1" else sn
                    # d_i K(x - y) = (x_i - y_i) / (2 pi |x - y|^2)
                    return (y1, y2), (-1 if comp > 0 else 1)
            else:
                raise ValueError(f"unknown density {which!r}")
        raise SamplerError(f"kernel sampler exceeded {self.MAX_PROPOSALS} proposals at x={x}")

    def density(self, x, y, which: str = "rho"):
        """Continuous part of the named density at ``y`` (vectorized over y)."""
        nz = self.normalizations(x)
        y = np.asarray(y, dtype=float)
        d = np.hypot(y[..., 0] - x[0], y[..., 1] - x[1])
        hy = self.weight(y)
        with np.errstate(divide="ignore"):
            if which == "rho":
                return np.abs(np.log(d)) / (2 * math.pi) * hy / nz.N
            if which == "rho_delta":
                return np.abs(np.log(d)) / (2 * math.pi) * hy / nz.N_delta
            i = 0 if which == "rho_1" else 1
            return np.abs(y[..., i] - x[i]) / (2 * math.pi * d * d) * hy / (nz.N1 if i == 0 else nz.N2)
