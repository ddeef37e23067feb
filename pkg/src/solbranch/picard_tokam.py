"""First Picard iterates of the two TOKAM-2D formulations by quadrature.

Both oracles use the zeroth iterates ``u0(tau) = e^{-rate tau} e^{tau L} u(0)``
(what a depth-limited line returns) and integrate the Duhamel term in time
with Gauss-Legendre.  None of the sampling machinery is reused: derivatives
come from symbolic differentiation, the log-kernel potential from its radial
closed form, and the ``e^{-phi}`` series is summed in real space.
"""
from __future__ import annotations

import math

import numpy as np

from .expr import compile_expr, diff, parse
from .fourier import FOURIER_VARS, FourierParams, gamma_convolution_power
from .kernels import get_weight
from .oracles import OracleValue
from .tokam import TOKAM_VARS, TokamParams

__all__ = ["tokam_picard", "fourier_picard"]


def _vec(e, allowed):
    e = parse(e, allowed) if isinstance(e, str) else e
    f = compile_expr(e)
    return e, f


def _call(f, **env):
    shape = np.broadcast(*env.values()).shape
    return np.broadcast_to(np.asarray(f(env), dtype=float), shape)


# ---- configuration space ----------------------------------------------------

def _gh2(n):
    x, w = np.polynomial.hermite.hermgauss(n)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    W = np.outer(w, w) / math.pi
    return X1.ravel(), X2.ravel(), W.ravel()


def _is_radial(f, probes=(0.3, 0.9, 1.7, 2.6)):
    for r in probes:
        a = float(_call(f, x1=r, x2=0.0))
        for th in (0.7, 1.9, 4.0):
            b = float(_call(f, x1=r * math.cos(th), x2=r * math.sin(th)))
            if abs(a - b) > 1e-12 * max(1.0, abs(a)):
                return False
    return True


class _TokamIterate:
    def __init__(self, params: TokamParams, init_n, init_Omega, h, n_s, n_out, n_in, n_u):
        self.p = params
        self.w = get_weight(h)
        self.lam = params.rate
        en, self.n0 = _vec(init_n, TOKAM_VARS)
        eo, self.o0 = _vec(init_Omega, TOKAM_VARS)
        self.dn = [compile_expr(diff(en, v)) for v in TOKAM_VARS]
        self.do = [compile_expr(diff(eo, v)) for v in TOKAM_VARS]
        self.src = compile_expr(params.S)
        if not _is_radial(self.o0):
            raise ValueError("the TOKAM Picard oracle needs radially symmetric init_Omega")
        self.s_nodes, self.s_w = np.polynomial.legendre.leggauss(n_s)
        self.out = _gh2(n_out)
        self.inn = _gh2(n_in)
        self.u_nodes, self.u_w = np.polynomial.legendre.leggauss(n_u)

    def heat(self, fs, X1, X2, var):
        """``E f(X + sqrt(2 var) Z)`` for each f in ``fs``, over arrays X."""
        z1, z2, w = self.inn
        sd = math.sqrt(2.0 * var) * math.sqrt(2.0)
        P1 = X1[..., None] + sd * z1
        P2 = X2[..., None] + sd * z2
        return [_call(f, x1=P1, x2=P2) @ w for f in fs]

    def _gl(self, a, b):
        return 0.5 * (b - a)[..., None] * self.u_nodes + 0.5 * (b + a)[..., None], 0.5 * (b - a)[..., None] * self.u_w

    def potential(self, X1, X2, tau):
        """(phi, d1 phi, d2 phi) of ``Psi0 = h Omega0(tau)`` at X, radial formulas."""
        R = np.hypot(X1, X2)
        decay = math.exp(-self.lam * tau)
        var = self.p.nu * tau

        def upsi(u):
            (om,) = self.heat([self.o0], u, np.zeros_like(u), var)
            return u * self.w.w(u) * decay * om

        inner_u, inner_w = self._gl(np.zeros_like(R), R)
        inner = np.sum(upsi(inner_u) * inner_w, axis=-1)
        outer = 0.0
        edges = [R, R + 2.0, R + 8.0, R + self.w.tail]
        for a, b in zip(edges[:-1], edges[1:]):
            u, wu = self._gl(a, b)
            outer = outer + np.sum(upsi(u) * np.log(u) * wu, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            phi = np.where(R > 0, np.log(R) * inner, 0.0) + outer
            g = np.where(R > 0, inner / (R * R), 0.0)
        return phi, g * X1, g * X2

    def forcing(self, species, X1, X2, tau):
        p, lam = self.p, self.lam
        decay = math.exp(-lam * tau)
        n, dn1, dn2 = self.heat([self.n0] + self.dn, X1, X2, p.D * tau)
        phi, f1, f2 = self.potential(X1, X2, tau)
        if species == "n":
            n, dn1, dn2 = decay * n, decay * dn1, decay * dn2
            src = _call(self.src, x1=X1, x2=X2, t=tau)
            return src - (f1 * dn2 - f2 * dn1) - lam * n * np.expm1(-phi)
        om, do1, do2 = (decay * a for a in self.heat([self.o0] + self.do, X1, X2, p.nu * tau))
        R = np.hypot(X1, X2)
        hx = self.w.w(R)
        gl = self.w.dlogw(R) / R
        dpsi1 = do1 + om * gl * X1
        dpsi2 = do2 + om * gl * X2
        body = (p.sigma * (1.0 - math.exp(p.Lambda)) - hx * (f1 * dpsi2 - f2 * dpsi1)
                + lam * hx * om - lam * np.expm1(-phi) - p.g * dn2 / n)
        return body / hx

    def value(self, species, x, t, form):
        p, lam = self.p, self.lam
        var = p.D if species == "n" else p.nu
        z1, z2, w = self.out
        x1, x2 = float(x[0]), float(x[1])
        hx = self.w.at(x1, x2)
        use_psi = species == "Omega" and form == "psi"

        def outer_heat(vals, X1, X2):
            if use_psi:
                vals = vals * self.w.w(np.hypot(X1, X2)) / hx
            return float(np.sum(vals * w))

        sd = 2.0 * math.sqrt(var * t)
        X1, X2 = x1 + sd * z1, x2 + sd * z2
        f0 = self.n0 if species == "n" else self.o0
        head = math.exp(-lam * t) * outer_heat(_call(f0, x1=X1, x2=X2), X1, X2)
        total = 0.0
        for sn, sw in zip(self.s_nodes, self.s_w):
            s = 0.5 * t * (sn + 1.0)
            sd = 2.0 * math.sqrt(var * s)
            X1, X2 = x1 + sd * z1, x2 + sd * z2
            g = self.forcing(species, X1, X2, t - s)
            total += 0.5 * t * sw * math.exp(-lam * s) * outer_heat(g, X1, X2)
        return head + total


def tokam_picard(params: TokamParams, init_n, init_Omega, point, t: float, depth: int = 1,
                 h="default", form: str = "omega"):
    """Depth-1 iterates ``(n, Omega)`` at ``point`` with refinement tolerances.

    ``form="omega"`` propagates ``Omega = Psi/h`` with the heat semigroup, as
    the branching process does; ``form="psi"`` propagates ``Psi`` and divides
    by ``h(x)`` at the end.  ``init_Omega`` must be radially symmetric (the
    log-kernel potential is evaluated with the radial closed form).
    """
    if depth != 1:
        raise NotImplementedError("the TOKAM Picard oracle is implemented for depth 1")
    if form not in ("omega", "psi"):
        raise ValueError("form must be 'omega' or 'psi'")
    if not t > 0:
        raise ValueError("t must be positive")
    out = {}
    for sp in ("n", "Omega"):
        vals = []
        for rules in ((8, 12, 10, 16), (12, 16, 14, 24)):
            it = _TokamIterate(params, init_n, init_Omega, h, *rules)
            vals.append(it.value(sp, point, t, form))
        out[sp] = OracleValue(vals[1], abs(vals[1] - vals[0]) + 1e-12)
    return out["n"], out["Omega"]


# ---- Fourier space ------------------------------------------------------------

class _FourierIterate:
    def __init__(self, params: FourierParams, init_chi, init_zeta, n_s, n_grid, L_k, L_x):
        self.p = params
        self.F0 = [compile_expr(e) for e in _pair(init_chi)]
        self.P0 = [compile_expr(e) for e in _pair(init_zeta)]
        self.S = [compile_expr(e) for e in params.S]
        self.s_nodes, self.s_w = np.polynomial.legendre.leggauss(n_s)
        self.kg = np.linspace(-L_k, L_k, n_grid)
        self.dk = self.kg[1] - self.kg[0]
        self.xg = np.linspace(-L_x, L_x, n_grid)
        self.dx = self.xg[1] - self.xg[0]
        self.K1, self.K2 = np.meshgrid(self.kg, self.kg, indexing="ij")
        self.E = np.exp(-1j * np.outer(self.xg, self.kg))  # [x, k]

    @staticmethod
    def _ev(pair, k1, k2, t=None):
        env = {"k1": k1, "k2": k2}
        if t is not None:
            env["t"] = t
        shape = np.broadcast(*env.values()).shape
        re, im = (np.broadcast_to(np.asarray(f(env), dtype=float), shape) for f in pair)
        return re + 1j * im

    def F(self, k1, k2, tau):
        return np.exp(-self.p.D * (k1 * k1 + k2 * k2) * tau) * self._ev(self.F0, k1, k2)

    def Phi(self, k1, k2, tau):
        return np.exp(-self.p.nu * (k1 * k1 + k2 * k2) * tau) * self._ev(self.P0, k1, k2)

    def series(self, k, tau):
        """``sum_{n>=1} (-1)^n Phi^{*n}(k) / (n! (2 pi)^{n-1})`` as ``FT[e^{-phi} - 1](k)``."""
        Ph = self.Phi(self.K1, self.K2, tau)
        phi = self.E @ Ph @ self.E.T * (self.dk ** 2 / (2.0 * math.pi))
        e1 = np.exp(1j * k[0] * self.xg)
        e2 = np.exp(1j * k[1] * self.xg)
        return complex(e1 @ np.expm1(-phi) @ e2) * self.dx ** 2 / (2.0 * math.pi)

    def forcing(self, species, k, tau):
        p = self.p
        k1, k2 = k
        kk = k1 * k1 + k2 * k2
        X1, X2 = self.K1, self.K2  # xi
        R1, R2 = k1 - X1, k2 - X2  # k - xi
        w = self.dk ** 2 / (2.0 * math.pi)
        ser = self.series(k, tau)
        if species == "chi":
            a = np.sum(R1 * X2 * (self.Phi(R1, R2, tau) * self.F(X1, X2, tau)
                                  - self.F(R1, R2, tau) * self.Phi(X1, X2, tau))) * w
            c = np.sum((R1 * X1 + R2 * X2) * self.F(R1, R2, tau) * self.F(X1, X2, tau)) * w
            src = complex(self._ev(self.S, k1, k2, tau))
            return src + a - p.rate * ser - p.D * c
        a = np.sum(R1 * X2 * (X1 * X1 + X2 * X2 - R1 * R1 - R2 * R2)
                   * self.Phi(R1, R2, tau) * self.Phi(X1, X2, tau)) * w / kk
        drive = -1j * p.g * k2 / kk * complex(self.F(k1, k2, tau))
        return a + drive + p.rate * ser / kk

    def value(self, species, k, t):
        p = self.p
        kk = k[0] ** 2 + k[1] ** 2
        rate = (p.D if species == "chi" else p.nu) * kk
        u0 = self.F if species == "chi" else self.Phi
        total = complex(u0(k[0], k[1], t))
        for sn, sw in zip(self.s_nodes, self.s_w):
            s = 0.5 * t * (sn + 1.0)
            total += 0.5 * t * sw * math.exp(-rate * s) * self.forcing(species, k, t - s)
        return total / gamma_convolution_power(p.kernel, 1, k)


def _pair(p):
    if isinstance(p, str):
        p = (p, "0")
    return tuple(parse(e, FOURIER_VARS) if isinstance(e, str) else e for e in p)


def fourier_picard(params: FourierParams, init_chi, init_zeta, k, t: float, depth: int = 1,
                   L_k: float = 10.0, L_x: float = 24.0):
    """Depth-1 iterates ``(chi, zeta)`` at momentum ``k`` (complex).

    ``init_chi``/``init_zeta`` are the initial transforms ``F(k,0)`` and
    ``Phi(k,0)``; both must decay inside ``|k| < L_k`` and their inverse
    transforms inside ``|x| < L_x``.
    """
    if depth != 1:
        raise NotImplementedError("the Fourier Picard oracle is implemented for depth 1")
    if k[0] == 0 and k[1] == 0:
        raise ValueError("k = 0 is excluded")
    out = []
    for sp in ("chi", "zeta"):
        vals = [_FourierIterate(params, init_chi, init_zeta, n_s, n, L_k, L_x).value(sp, k, t)
                for n_s, n in ((8, 128), (12, 192))]
        out.append(OracleValue(vals[1], abs(vals[1] - vals[0]) + 1e-12))
    return tuple(out)
