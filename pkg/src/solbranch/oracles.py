"""Deterministic reference solutions used as ground truth.

SOLEDGE: the exact characteristics solution of the linear system (D = nu), a
method-of-lines finite-difference solver, and truncated Picard iterates by
Gauss quadrature.  The TOKAM Picard iterates live in :mod:`picard_tokam`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .expr import Expr, compile_expr, eval_jet, parse
from .jets import Jet
from .soledge import SOLEDGE_VARS, SoledgeParams

__all__ = [
    "OracleValue",
    "Grid2",
    "FDResult",
    "soledge_characteristics_exact",
    "soledge_fd_solve",
    "soledge_fd_point",
    "soledge_picard",
    "picard_iterate_quadrature",
]


@dataclass(frozen=True)
class OracleValue:
    value: complex | float
    tolerance: float


def _expr(e, allowed=SOLEDGE_VARS):
    return parse(e, allowed) if isinstance(e, str) else e


_GH_X, _GH_W = np.polynomial.hermite.hermgauss(60)


def _heat_array(f, r, s, nodes=(_GH_X, _GH_W)):
    """E f(r + sqrt(2 s) Z) for an array ``r`` (f vectorized)."""
    x, w = nodes
    r = np.asarray(r, dtype=float)
    if s <= 0:
        return f(r)
    pts = r[..., None] + 2.0 * math.sqrt(s) * x
    return np.tensordot(f(pts), w, axes=([-1], [0])) / math.sqrt(math.pi)


def soledge_characteristics_exact(params: SoledgeParams, m: int, g, point, t: float):
    """Exact (N, Gamma) for N(0) = cos(m theta) g(r), Gamma(0) = 0, D = nu.

    With D = nu, ``u = N +/- Gamma`` decouple; for a single Fourier mode
    N = H_t[g] cos(m theta) cos(m t/q), Gamma = H_t[g] sin(m theta) sin(m t/q).
    """
    if params.D != params.nu:
        raise ValueError("characteristics solution needs D == nu")
    g = _expr(g, ("r",))
    fg = compile_expr(g)
    r, theta = point

    def gv(rr):
        return np.broadcast_to(np.asarray(fg({"r": rr}), dtype=float), np.shape(rr))

    h = float(_heat_array(gv, np.array(r), params.D * t))
    n = h * math.cos(m * theta) * math.cos(m * t / params.q)
    gam = h * math.sin(m * theta) * math.sin(m * t / params.q)
    return n, gam


# ---- finite differences --------------------------------------------------

@dataclass(frozen=True)
class Grid2:
    n_theta: int
    n_r: int
    r_lo: float
    r_hi: float
    dt: Optional[float] = None

    def __post_init__(self):
        if self.n_theta < 8 or self.n_theta & (self.n_theta - 1):
            raise ValueError("n_theta must be a power of two >= 8")
        if self.n_r < 3 or not self.r_hi > self.r_lo:
            raise ValueError("need n_r >= 3 and r_hi > r_lo")

    @property
    def theta(self):
        return np.arange(self.n_theta) * (2.0 * math.pi / self.n_theta)

    @property
    def r(self):
        return np.linspace(self.r_lo, self.r_hi, self.n_r)


@dataclass
class FDResult:
    grid: Grid2
    N: np.ndarray  # shape (n_r, n_theta)
    Gamma: np.ndarray
    t: float
    steps: int

    def at(self, r: float, theta: float):
        """Values at (r, theta): trigonometric interpolation in theta, cubic in r."""
        out = []
        for field_ in (self.N, self.Gamma):
            row = _interp_r(self.grid.r, field_, r)
            out.append(_trig_interp(row, theta))
        return tuple(out)


def _trig_interp(row, theta):
    n = row.size
    c = np.fft.rfft(row) / n
    k = np.arange(c.size)
    w = np.full(c.size, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return float(np.real(np.sum(w * c * np.exp(1j * k * theta))))


def _interp_r(rg, field_, r):
    if rg.size < 4:
        return field_[int(np.argmin(abs(rg - r)))]
    i = int(np.clip(np.searchsorted(rg, r) - 2, 0, rg.size - 4))
    xs = rg[i:i + 4]
    out = np.zeros(field_.shape[1])
    for a in range(4):
        la = 1.0
        for b in range(4):
            if a != b:
                la *= (r - xs[b]) / (xs[a] - xs[b])
        out += la * field_[i + a]
    return out


def _d_theta(f, h):
    # 4th-order central difference, periodic in the last axis
    return (8.0 * (np.roll(f, -1, -1) - np.roll(f, 1, -1)) - (np.roll(f, -2, -1) - np.roll(f, 2, -1))) / (12.0 * h)


def _d_rr(f, h):
    # 2nd-order, zero-flux (mirror) boundaries in r (axis 0)
    g = np.empty((f.shape[0] + 2, f.shape[1]))
    g[1:-1] = f
    g[0] = f[1]
    g[-1] = f[-2]
    return (g[2:] - 2.0 * f + g[:-2]) / (h * h)


def soledge_fd_solve(params: SoledgeParams, init_N, init_Gamma, grid: Grid2, t: float,
                     chi: int = 0) -> FDResult:
    """Method-of-lines RK4 solve of the SOLEDGE system on ``grid`` up to ``t``.

    ``chi=0`` is the nonlinear system (``params.nonlinear=False`` drops the
    Gamma^2/N flux); ``chi=1`` the relaxation system.
    """
    if chi not in (0, 1):
        raise ValueError("chi must be 0 or 1")
    init_N, init_Gamma = _expr(init_N), _expr(init_Gamma)
    th, rr = np.meshgrid(grid.theta, grid.r)
    env = {"r": rr, "theta": th}
    n = np.broadcast_to(np.asarray(compile_expr(init_N)(env), dtype=float), rr.shape).copy()
    g = np.broadcast_to(np.asarray(compile_expr(init_Gamma)(env), dtype=float), rr.shape).copy()
    dth = 2.0 * math.pi / grid.n_theta
    dr = (grid.r_hi - grid.r_lo) / (grid.n_r - 1)
    q, D, nu = params.q, params.D, params.nu
    inv_eta = 1.0 / params.eta

    def rhs(n, g):
        if chi == 1:
            dn = -_d_theta(g, dth) / q - n * inv_eta + D * _d_rr(n, dr)
            dg = -(g - params.Gamma0) * inv_eta + nu * _d_rr(g, dr)
        else:
            flux = n + (g * g / n if params.nonlinear else 0.0)
            dn = -_d_theta(g, dth) / q + D * _d_rr(n, dr)
            dg = -_d_theta(flux, dth) / q + nu * _d_rr(g, dr)
        return dn, dg

    # stability: RK4 real-axis limit ~2.78, imaginary ~2.83
    speed = 1.0
    if chi == 0:
        nmin = float(np.min(np.abs(n)))
        speed = max(1.0, float(np.max(np.abs(g))) / max(nmin, 1e-12) * 2.0 + 1.0)
    dmax = max(D, nu, 1e-300)
    limits = [2.0 * dth * q / (1.372 * speed)]
    if dmax > 0:
        limits.append(0.6 * dr * dr / dmax)
    if chi == 1:
        # accuracy, not stability: RK4 error in e^{-t/eta} stays below ~1e-7
        limits.append(0.2 * params.eta)
    dt_max = 0.5 * min(limits)
    dt = min(grid.dt, dt_max) if grid.dt else dt_max
    steps = max(1, math.ceil(t / dt))
    dt = t / steps
    norm0 = max(float(np.max(np.abs(n))), float(np.max(np.abs(g))), 1e-300)
    for _ in range(steps):
        k1 = rhs(n, g)
        k2 = rhs(n + 0.5 * dt * k1[0], g + 0.5 * dt * k1[1])
        k3 = rhs(n + 0.5 * dt * k2[0], g + 0.5 * dt * k2[1])
        k4 = rhs(n + dt * k3[0], g + dt * k3[1])
        n = n + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        g = g + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        norm = max(float(np.max(np.abs(n))), float(np.max(np.abs(g))))
        if not np.isfinite(norm) or norm > 1e10 * norm0:
            raise ArithmeticError("finite-difference solve became unstable")
    return FDResult(grid, n, g, t, steps)


def soledge_fd_point(params: SoledgeParams, init_N, init_Gamma, point, t: float, chi: int = 0,
                     n_theta: int = 128, n_r: Optional[int] = None, r_dependent: Optional[bool] = None):
    """(N, Gamma) at one point with error estimates from a refinement pair.

    Returns two :class:`OracleValue` with tolerance = |fine - coarse| + 1e-10.
    """
    init_N, init_Gamma = _expr(init_N), _expr(init_Gamma)
    from .expr import variables

    if r_dependent is None:
        r_dependent = "r" in (variables(init_N) | variables(init_Gamma))
    r, theta = point
    reach = math.sqrt(4.0 * max(params.D, params.nu) * t * math.log(1e8)) + 0.5
    if r_dependent:
        lo, hi = r - reach, r + reach
        n_r = n_r or 201
    else:
        lo, hi, n_r = r - 1.0, r + 1.0, 5
    results = []
    for nt, nr in ((n_theta // 2, (n_r + 1) // 2 if r_dependent else n_r), (n_theta, n_r)):
        fd = soledge_fd_solve(params, init_N, init_Gamma, Grid2(nt, nr, lo, hi), t, chi)
        results.append(fd.at(r, theta))
    (nc, gc), (nf, gf) = results
    return OracleValue(nf, abs(nf - nc) + 1e-10), OracleValue(gf, abs(gf - gc) + 1e-10)


# ---- Picard iterates ------------------------------------------------------

class _SoledgePicard:
    """Picard iterates of the chi=0 integral equations as theta-jets over r-arrays."""

    def __init__(self, params, init_N, init_Gamma, theta, n_tau=20, n_gh=40):
        self.p = params
        self.init = {"N": _expr(init_N), "Gamma": _expr(init_Gamma)}
        self.theta = theta
        self.tau_x, self.tau_w = np.polynomial.legendre.leggauss(n_tau)
        self.gh = np.polynomial.hermite.hermgauss(n_gh)

    def leaf(self, species, r, order):
        j = eval_jet(self.init[species], {"r": r, "theta": self.theta}, order)
        return Jet([np.broadcast_to(np.asarray(c, dtype=float), r.shape) for c in j.c], 1, order)

    def heat(self, jet_fn, r, s):
        x, w = self.gh
        if s <= 0:
            return jet_fn(r)
        pts = r[..., None] + 2.0 * math.sqrt(s) * x
        j = jet_fn(pts)
        return Jet([np.tensordot(c, w, axes=([-1], [0])) / math.sqrt(math.pi) for c in j.c], 1, j.order)

    def iterate(self, species, k, t, r, order):
        diff = self.p.D if species == "N" else self.p.nu
        head = self.heat(lambda rr: self.leaf(species, rr, order), r, diff * t)
        if k == 0 or t <= 0:
            return head
        total = None
        for xi, wi in zip(self.tau_x, self.tau_w):
            tau = 0.5 * t * (xi + 1.0)
            wt = 0.5 * t * wi

            def source(rr, tau=tau):
                s = t - tau
                if species == "N":
                    f = self.iterate("Gamma", k - 1, s, rr, order + 1)
                else:
                    nn = self.iterate("N", k - 1, s, rr, order + 1)
                    f = nn
                    if self.p.nonlinear:
                        gg = self.iterate("Gamma", k - 1, s, rr, order + 1)
                        f = gg * gg / nn + nn
                return f.d(0)

            term = self.heat(source, r, diff * tau) * (-wt / self.p.q)
            total = term if total is None else total + term
        return head + total


def soledge_picard(params: SoledgeParams, init_N, init_Gamma, point, t: float, depth: int = 1):
    """Depth-``depth`` Picard iterates (N, Gamma) at ``point``, with tolerances.

    Tolerance is the change when both quadrature rules are refined.
    """
    if depth not in (0, 1, 2):
        raise ValueError("depth must be 0, 1 or 2")
    r, theta = point
    vals = []
    for n_tau, n_gh in ((12, 30), (20, 40)):
        pic = _SoledgePicard(params, init_N, init_Gamma, theta, n_tau, n_gh)
        rr = np.array([float(r)])
        vals.append((float(pic.iterate("N", depth, t, rr, 0).c[0][0]),
                     float(pic.iterate("Gamma", depth, t, rr, 0).c[0][0])))
    (n1, g1), (n2, g2) = vals
    return OracleValue(n2, abs(n2 - n1) + 1e-13), OracleValue(g2, abs(g2 - g1) + 1e-13)


def picard_iterate_quadrature(system: str, depth: int, init, point, t: float, params, **kw):
    """Truncated Picard expansion of one of the three systems.

    ``init`` is a pair of initial data (N, Gamma), (n, Omega) or the Fourier
    pairs; ``point`` is (r, theta), x or k.  Returns the oracle values per
    species.
    """
    if depth not in (1, 2):
        raise ValueError("depth must be 1 or 2")
    if system == "soledge":
        return soledge_picard(params, init[0], init[1], point, t, depth)
    if system == "tokam-config":
        from .picard_tokam import tokam_picard

        return tokam_picard(params, init[0], init[1], point, t, depth=depth, **kw)
    if system == "tokam-fourier":
        from .picard_tokam import fourier_picard

        return fourier_picard(params, init[0], init[1], point, t, depth=depth, **kw)
    raise ValueError(f"unknown system {system!r}")
