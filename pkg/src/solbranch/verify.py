"""Acceptance criteria as runnable checks.

Each ``criterion_N(suite)`` returns a :class:`CriterionResult`; ``suite`` is
``"fast"`` (reduced sample counts) or ``"full"`` (the pinned counts).  The
tolerances do not change between suites, only the sample sizes do.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CriterionResult", "CRITERIA", "run_suite", "SIZES"]

SIZES = {
    "fast": dict(heat=100_000, lin=20_000, fd=50_000, pinv=20_000, picard=20_000, tokam_picard=10_000,
                 fourier=20_000, draws=20_000, audit=1_000, det=3_000),
    "full": dict(heat=100_000, lin=100_000, fd=1_000_000, pinv=200_000, picard=100_000,
                 tokam_picard=100_000, fourier=100_000, draws=100_000, audit=10_000, det=5_000),
}

SEED = 20240607


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number:2d}: {self.title} ({self.elapsed:.1f} s)"


def _close(est, ref, tol=0.0, n_sigma=3.0):
    """Per-component check for real or complex estimates."""
    d = est.mean - ref
    if isinstance(d, complex) or isinstance(est.mean, complex):
        d = complex(d)
        return (abs(d.real) <= n_sigma * est.stderr_re + tol
                and abs(d.imag) <= n_sigma * est.stderr_im + tol)
    return abs(d) <= n_sigma * est.standard_error + tol


def _f(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    return float(x)


# ---- 1 ------------------------------------------------------------------

def criterion_1(suite="full"):
    from .heat import estimate_heat

    n = SIZES[suite]["heat"]
    t0 = time.perf_counter()
    e = estimate_heat("cos(x)", 0.0, 1.0, 0.5, n, SEED)
    wall = time.perf_counter() - t0
    exact = math.exp(-0.5)
    ok = _close(e, exact) and e.standard_error <= 3e-3 and wall <= 5.0
    return CriterionResult(1, "heat-equation smoke test", ok,
                           dict(mean=e.mean, exact=exact, stderr=e.standard_error, seconds=wall))


# ---- 2 ------------------------------------------------------------------

LIN_POINTS = [(0.5, 0.3), (1.0, 1.2), (1.5, 2.5), (0.8, 4.0), (2.0, 5.5)]


def criterion_2(suite="full"):
    from .oracles import soledge_characteristics_exact
    from .soledge import SoledgeParams, estimate_soledge

    p = SoledgeParams(q=1.0, D=0.1, nu=0.1, nonlinear=False)
    n = SIZES[suite]["lin"]
    rows, ok = [], True
    for i, pt in enumerate(LIN_POINTS):
        # the order-8 default rejects ~0.2% of trees here, which biases the mean
        eN, eG = estimate_soledge(p, "cos(theta)", "0", pt, 0.2, n, SEED + i, max_jet_order=24)
        xN, xG = soledge_characteristics_exact(p, 1, "1", pt, 0.2)
        rej = max(eN.rejection_rate, eG.rejection_rate)
        good = _close(eN, xN, 1e-10) and _close(eG, xG, 1e-10) and rej < 1e-3
        ok &= good
        rows.append(dict(point=pt, N=eN.mean, N_exact=xN, N_se=eN.standard_error,
                         Gamma=eG.mean, Gamma_exact=xG, Gamma_se=eG.standard_error,
                         rejection_rate=rej, ok=bool(good)))
    return CriterionResult(2, "SOLEDGE linear exactness", ok, dict(points=rows))


# ---- 3, 4 ---------------------------------------------------------------

FD_INIT = ("2 + 0.2*cos(theta)", "0.2*sin(theta)")
FD_POINTS = [(0.3, 0.7), (1.0, 2.0), (0.6, 4.5)]


def _fd_params(p_survive=0.5):
    from .soledge import SoledgeParams

    return SoledgeParams(q=2.0, D=0.1, nu=0.1, p_survive=p_survive)


def criterion_3(suite="full"):
    from .oracles import soledge_fd_point
    from .soledge import estimate_soledge

    p = _fd_params()
    n = SIZES[suite]["fd"]
    rows, ok = [], True
    for i, pt in enumerate(FD_POINTS):
        oN, oG = soledge_fd_point(p, *FD_INIT, pt, 0.2)
        eN, eG = estimate_soledge(p, *FD_INIT, pt, 0.2, n, SEED + i, max_jet_order=24)
        rej = max(eN.rejection_rate, eG.rejection_rate)
        good = _close(eN, oN.value, oN.tolerance) and _close(eG, oG.value, oG.tolerance) and rej < 1e-3
        ok &= good
        rows.append(dict(point=pt, N=eN.mean, N_fd=oN.value, N_se=eN.standard_error, N_tol=oN.tolerance,
                         Gamma=eG.mean, Gamma_fd=oG.value, Gamma_se=eG.standard_error,
                         Gamma_tol=oG.tolerance, rejection_rate=rej, ok=good))
    return CriterionResult(3, "SOLEDGE nonlinear vs finite differences", ok, dict(points=rows))


def criterion_4(suite="full"):
    from .soledge import estimate_soledge

    n = SIZES[suite]["pinv"]
    pt = FD_POINTS[0]
    # small p interrupts more, so label chains are longer: order 24 rejects ~2% at p=0.3
    runs = {ps: estimate_soledge(_fd_params(ps), *FD_INIT, pt, 0.2, n, SEED, max_jet_order=64)
            for ps in (0.3, 0.7)}
    ok, rows = True, {}
    for k, name in enumerate(("N", "Gamma")):
        a, b = runs[0.3][k], runs[0.7][k]
        band = 3.0 * math.hypot(a.standard_error, b.standard_error)
        rej = max(a.rejection_rate, b.rejection_rate)
        good = abs(a.mean - b.mean) <= band and rej < 1e-3
        ok &= good
        rows[name] = dict(p03=a.mean, p07=b.mean, band=band, rejection_rate=rej, ok=bool(good))
    return CriterionResult(4, "p-invariance", ok, rows)


# ---- 5 ------------------------------------------------------------------

TOKAM_INIT = ("1 + 0.1*exp(-(x1^2+x2^2))", "0.1*exp(-(x1^2+x2^2))")
TOKAM_POINT = (0.7, 0.4)
FOURIER_INIT = (("0.3*exp(-(k1^2+k2^2))", "0"), ("0.3*exp(-(k1^2+k2^2)/2)", "0"))
FOURIER_K = (0.8, 0.5)


def criterion_5(suite="full"):
    from .fourier import FourierParams, estimate_fourier
    from .oracles import picard_iterate_quadrature
    from .soledge import estimate_soledge
    from .tokam import TokamParams, estimate_tokam

    sz = SIZES[suite]
    rows, ok = {}, True

    p = _fd_params()
    oN, oG = picard_iterate_quadrature("soledge", 1, FD_INIT, FD_POINTS[0], 0.2, p)
    eN, eG = estimate_soledge(p, *FD_INIT, FD_POINTS[0], 0.2, sz["picard"], SEED, max_depth=1)
    for name, e, o in (("soledge N", eN, oN), ("soledge Gamma", eG, oG)):
        good = _close(e, o.value, o.tolerance)
        ok &= good
        rows[name] = dict(estimate=e.mean, oracle=o.value, stderr=e.standard_error, ok=bool(good))

    tp = TokamParams(sigma=1.0, Lambda=0.0, g=0.5)
    on, oO = picard_iterate_quadrature("tokam-config", 1, TOKAM_INIT, TOKAM_POINT, 0.1, tp)
    for name, o in (("n", on), ("Omega", oO)):
        e = estimate_tokam(tp, *TOKAM_INIT, name, TOKAM_POINT, 0.1, sz["tokam_picard"], SEED, max_depth=1)
        good = _close(e, o.value, o.tolerance)
        ok &= good
        rows["tokam " + name] = dict(estimate=e.mean, oracle=o.value, stderr=e.standard_error, ok=bool(good))

    fp = FourierParams(sigma=1.0, Lambda=0.0, g=0.5)
    oc, oz = picard_iterate_quadrature("tokam-fourier", 1, FOURIER_INIT, FOURIER_K, 0.05, fp)
    for name, o in (("chi", oc), ("zeta", oz)):
        e = estimate_fourier(fp, *FOURIER_INIT, name, FOURIER_K, 0.05, sz["fourier"], SEED, max_depth=1)
        good = _close(e, complex(o.value), o.tolerance)
        ok &= good
        rows["fourier " + name] = dict(estimate=_f(e.mean), oracle=_f(complex(o.value)),
                                       stderr=[e.stderr_re, e.stderr_im], ok=bool(good))
    return CriterionResult(5, "depth-1 Picard equivalence", ok, rows)


# ---- 6 ------------------------------------------------------------------

def catalog_tables():
    """The six tables built from the three systems' Duhamel coefficients."""
    from .fourier import FourierParams, build_fourier_tables
    from .kernels import KernelSampler
    from .soledge import interrupt_tables
    from .tokam import TokamParams, build_tokam_tables

    st = interrupt_tables(_fd_params())
    tn, to = build_tokam_tables(TokamParams(sigma=1.0, g=1.0), KernelSampler(), TOKAM_POINT)
    fc, fz = build_fourier_tables(FourierParams(sigma=1.0, g=1.0), FOURIER_K)
    return {"soledge N": st["N"], "soledge Gamma": st["Gamma"], "tokam n": tn, "tokam Omega": to,
            "fourier chi": fc, "fourier zeta": fz}


def _table_ok(table):
    ps = sum(e.probability for e in table.entries)
    good = abs(ps - 1.0) <= 1e-12
    for e in table.entries:
        good &= abs(e.probability * e.multiplier - e.coefficient) <= 1e-12 * max(1.0, abs(e.coefficient))
    return good


def criterion_6(suite="full"):
    from .tables import make_branch_table

    rng = np.random.default_rng(SEED)
    bad = 0
    for _ in range(1000):
        m = int(rng.integers(1, 8))
        raw = []
        for i in range(m):
            c = rng.normal() * 10 ** rng.uniform(-3, 3)
            if rng.uniform() < 0.3:
                c = complex(c, rng.normal())
            raw.append((f"e{i}", c, float(rng.uniform(0.01, 5.0))))
        if rng.uniform() < 0.2:
            raw.append(("zero", 0.0, 0.0))
        bad += not _table_ok(make_branch_table(raw))
    catalog = {k: _table_ok(v) for k, v in catalog_tables().items()}
    e = math.e
    tail1 = sum(1.0 / (math.factorial(j) * (e - 1.0)) for j in range(1, 30))
    tail2 = sum(1.0 / (math.factorial(j) * (e - 2.0)) for j in range(2, 30))
    ok = bad == 0 and all(catalog.values()) and abs(tail1 - 1) <= 1e-12 and abs(tail2 - 1) <= 1e-12
    return CriterionResult(6, "branch-table identities", ok,
                           dict(random_failures=bad, catalog_tables=catalog, tail_min1=tail1, tail_min2=tail2))


# ---- 7 ------------------------------------------------------------------

NORM_POINTS = [(0.0, 0.0), (0.5, 0.3), (1.0, -0.7), (-2.0, 1.5), (3.5, 0.2)]


def _polar_reference(h, x):
    """(N, N1, N2) by scipy quad in polar coordinates about x (independent route)."""
    from scipy import integrate

    from .kernels import get_weight

    w = get_weight(h)
    R = math.hypot(*x)

    def hy(r, psi):
        return float(w.w(math.hypot(x[0] + r * math.cos(psi), x[1] + r * math.sin(psi))))

    def radial(psi, kern):
        brk = [1.0]
        if R > 0:
            # where the ray passes closest to the origin (kink of |y|)
            d = -(x[0] * math.cos(psi) + x[1] * math.sin(psi))
            if d > 0:
                brk.append(d)
        tail = R + w.tail
        val, _ = integrate.quad(lambda r: kern(r) * hy(r, psi) * r, 0.0, tail, points=sorted(set(brk)),
                                limit=400, epsabs=1e-13, epsrel=1e-11)
        return val

    def ang(f):
        kinks = [] if R == 0 else [math.atan2(-x[1], -x[0])]
        v, _ = integrate.quad(f, -math.pi, math.pi, points=kinks or None, limit=400, epsabs=1e-12,
                              epsrel=1e-10)
        return v

    # inner tolerances sit near roundoff; quad's warning concerns digits far below 1e-6
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        N = ang(lambda psi: radial(psi, lambda r: abs(math.log(r)) / (2 * math.pi) if r > 0 else 0.0))
        g = ang(lambda psi: radial(psi, lambda r: 1.0 / (2 * math.pi * r) if r > 0 else 0.0) * abs(math.cos(psi)))
        g2 = ang(lambda psi: radial(psi, lambda r: 1.0 / (2 * math.pi * r) if r > 0 else 0.0) * abs(math.sin(psi)))
    return N, g, g2


def _cell_probabilities(sampler, x, which, r_edges, n_sect):
    """Probability of each (radial ring, angular sector) cell about x, plus the atom."""
    from .kernels import get_weight

    w = get_weight("default")
    nz = sampler.normalizations(x)
    gx, gw = np.polynomial.legendre.leggauss(24)
    sect = np.linspace(-math.pi, math.pi, n_sect + 1)
    probs = np.zeros((len(r_edges) - 1, n_sect))
    for i in range(len(r_edges) - 1):
        a, b = r_edges[i], r_edges[i + 1]
        sub = np.geomspace(max(a, 1e-9), b, 9) if a == 0 else np.linspace(a, b, 9)
        if a == 0:
            sub = np.concatenate([[0.0], sub])
        for j in range(n_sect):
            pa, pb = sect[j], sect[j + 1]
            ps = np.linspace(pa, pb, 9)
            tot = 0.0
            for r0, r1 in zip(sub[:-1], sub[1:]):
                rr = 0.5 * (r1 - r0) * gx + 0.5 * (r1 + r0)
                rw = 0.5 * (r1 - r0) * gw
                for q0, q1 in zip(ps[:-1], ps[1:]):
                    qq = 0.5 * (q1 - q0) * gx + 0.5 * (q1 + q0)
                    qw = 0.5 * (q1 - q0) * gw
                    Rr, Q = np.meshgrid(rr, qq, indexing="ij")
                    y1 = x[0] + Rr * np.cos(Q)
                    y2 = x[1] + Rr * np.sin(Q)
                    hv = w.w(np.hypot(y1, y2))
                    if which in ("rho", "rho_delta"):
                        k = np.abs(np.log(Rr)) / (2 * math.pi)
                    elif which == "rho_1":
                        k = np.abs(np.cos(Q)) / (2 * math.pi * Rr)
                    else:
                        k = np.abs(np.sin(Q)) / (2 * math.pi * Rr)
                    tot += float(np.sum(k * hv * Rr * np.outer(rw, qw)))
            probs[i, j] = tot
    norm = {"rho": nz.N, "rho_1": nz.N1, "rho_2": nz.N2, "rho_delta": nz.N_delta}[which]
    atom = sampler.h(x) / nz.N_delta if which == "rho_delta" else 0.0
    return probs / norm, atom


def criterion_7(suite="full"):
    from scipy import stats

    from .kernels import KernelSampler, kernel_normalizations
    from .rng import RngStream

    norms = []
    ok = True
    for x in NORM_POINTS:
        kn = kernel_normalizations("default", x)
        N, N1, N2 = _polar_reference("default", x)
        hx = float(kn.h)
        # integral of each density computed with the independent rule
        integ = dict(rho=N / kn.N, rho_1=N1 / kn.N1, rho_2=N2 / kn.N2, rho_delta=(N + hx) / kn.N_delta)
        good = all(abs(v - 1.0) <= 1e-6 for v in integ.values())
        ok &= good
        norms.append(dict(x=x, integrals=integ, ok=good))

    n = SIZES[suite]["draws"]
    x = (0.5, 0.3)
    sampler = KernelSampler("default", checked=True)
    r_edges = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.5, 7.0, 60.0]
    n_sect = 8
    chi = {}
    for k, which in enumerate(("rho", "rho_1", "rho_2", "rho_delta")):
        probs, atom = _cell_probabilities(sampler, x, which, r_edges, n_sect)
        counts = np.zeros_like(probs)
        n_atom = 0
        for i in range(n):
            s = RngStream(SEED + k, i)
            y, _ = sampler.sample(s, x, which)
            d = math.hypot(y[0] - x[0], y[1] - x[1])
            if d == 0.0:
                n_atom += 1
                continue
            ri = min(np.searchsorted(r_edges, d, side="right") - 1, len(r_edges) - 2)
            sj = min(int((math.atan2(y[1] - x[1], y[0] - x[0]) + math.pi) / (2 * math.pi) * n_sect), n_sect - 1)
            counts[ri, sj] += 1
        obs = counts.ravel()
        exp = probs.ravel() * n
        if atom > 0:
            obs = np.append(obs, n_atom)
            exp = np.append(exp, atom * n)
        # merge sparse cells into one so every expected count is at least 5
        small = exp < 5
        if small.any():
            obs = np.append(obs[~small], obs[small].sum())
            exp = np.append(exp[~small], exp[small].sum())
        exp *= obs.sum() / exp.sum()
        res = stats.chisquare(obs, exp)
        chi[which] = dict(statistic=float(res.statistic), pvalue=float(res.pvalue),
                          mass=float(probs.sum() + atom))
        # four densities share the 0.01 family-wise level (Bonferroni)
        ok &= res.pvalue > 0.01 / 4 and abs(probs.sum() + atom - 1.0) < 1e-4
    return CriterionResult(7, "kernel sampler", ok, dict(normalizations=norms, chi_square=chi))


# ---- 8 ------------------------------------------------------------------

def _random_expr(rng, vars_, depth=0):
    leaf = rng.uniform() < (0.35 if depth < 3 else 1.0)
    if leaf:
        if rng.uniform() < 0.6:
            return rng.choice(vars_)
        return f"{rng.uniform(0.2, 2.0):.3f}"
    kind = rng.integers(0, 8)
    a = _random_expr(rng, vars_, depth + 1)
    b = _random_expr(rng, vars_, depth + 1)
    if kind == 0:
        return f"({a} + {b})"
    if kind == 1:
        return f"({a} - {b})"
    if kind == 2:
        return f"({a} * {b})"
    if kind == 3:
        return f"({a} / (2 + sin({b})))"
    if kind == 4:
        return f"sin({a})"
    if kind == 5:
        return f"exp(0.5*cos({a}))"
    if kind == 6:
        return f"log(2 + cos({a}))"
    return f"sqrt(1.5 + sin({a}))"


def _richardson(f, x, k, h=0.04):
    """k-th derivative by central differences with two Richardson steps."""

    def d(hh):
        return sum((-1) ** i * math.comb(k, i) * f(x + (k / 2 - i) * hh) for i in range(k + 1)) / hh ** k

    a, b, c = d(h), d(h / 2), d(h / 4)
    ab = (4 * b - a) / 3
    bc = (4 * c - b) / 3
    return (16 * bc - ab) / 15


def criterion_8(suite="full"):
    from .expr import compile_expr, eval_jet, parse
    from .jets import Jet

    rng = np.random.default_rng(SEED)
    worst, fails = 0.0, 0
    for i in range(200):
        two_d = i % 2 == 1
        vars_ = ["x1", "x2"] if two_d else ["theta"]
        e = parse(_random_expr(rng, vars_), vars_)
        f = compile_expr(e)
        base = {v: float(rng.uniform(-1, 1)) for v in vars_}
        order = 4
        j = eval_jet(e, base, order, jet_vars=tuple(vars_))
        if two_d:
            for (a1, a2) in [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (3, 1), (2, 2), (0, 4)]:
                if a1 + a2 > order:
                    continue

                def g2(y2, a1=a1):
                    return _richardson(lambda y1: f({"x1": y1, "x2": y2}), base["x1"], a1) if a1 else \
                        f({"x1": base["x1"], "x2": y2})

                ref = _richardson(g2, base["x2"], a2) if a2 else g2(base["x2"])
                ref /= math.factorial(a1) * math.factorial(a2)
                got = j[(a1, a2)]
                err = abs(got - ref) / max(abs(ref), 1.0)
                worst = max(worst, err)
                fails += err > 1e-6
        else:
            for k in range(1, order + 1):
                ref = _richardson(lambda y: f({"theta": y}), base["theta"], k) / math.factorial(k)
                err = abs(j.c[k] - ref) / max(abs(ref), 1.0)
                worst = max(worst, err)
                fails += err > 1e-6

    # round trips on random jets
    rt = 0.0
    for _ in range(200):
        dim = int(rng.integers(1, 3))
        n = len(Jet.constant(0.0, dim, 4).c)
        a = Jet([float(v) for v in rng.uniform(0.5, 2.0, n)], dim, 4)
        b = Jet([float(v) for v in rng.uniform(0.5, 2.0, n)], dim, 4)
        for got, want in (((a * b) / b, a), ((a / b) * b, a), (a.log().exp(), a), (a.exp().log(), a),
                          (a * a.reciprocal(), Jet.constant(1.0, dim, 4))):
            rt = max(rt, max(abs(x - y) for x, y in zip(got.c, want.c)))
    ok = fails == 0 and rt <= 1e-10
    return CriterionResult(8, "jet algebra", ok, dict(worst_relative=worst, failures=fails, round_trip=rt))


# ---- 9 ------------------------------------------------------------------

def criterion_9(suite="full"):
    from .fourier import MajorizingKernel, gamma_convolution_power, sample_conditioned_momenta
    from .rng import RngStream

    ker = MajorizingKernel(1.0, 1.0)
    grid = np.linspace(-12, 12, 481)
    dk = grid[1] - grid[0]
    X1, X2 = np.meshgrid(grid, grid, indexing="ij")
    worst = 0.0
    for n in (2, 3, 4):
        for k in ((0.0, 0.0), (1.0, 0.5), (2.0, -1.5)):
            m = n - 1  # gamma^{*(n-1)} on the grid, closed form
            prev = np.exp(-0.5 * ((k[0] - X1) ** 2 + (k[1] - X2) ** 2) / m) / (2 * math.pi * m)
            g = np.exp(-0.5 * (X1 ** 2 + X2 ** 2)) / (2 * math.pi)
            num = float(np.sum(prev * g)) * dk * dk
            exact = gamma_convolution_power(ker, n, k)
            worst = max(worst, abs(num - exact) / exact)
    sums = 0.0
    for i in range(2000):
        s = RngStream(SEED, i)
        n = 1 + i % 6
        k = (0.3 * (i % 7) - 1.0, 0.7 - 0.2 * (i % 5))
        xis = sample_conditioned_momenta(s, ker, n, k)
        last = (k[0] - sum(x[0] for x in xis), k[1] - sum(x[1] for x in xis))
        tot = (sum(x[0] for x in xis) + last[0], sum(x[1] for x in xis) + last[1])
        sums = max(sums, abs(tot[0] - k[0]), abs(tot[1] - k[1]))
    nd = SIZES[suite]["draws"]
    xs = np.array([sample_conditioned_momenta(RngStream(SEED + 1, i), ker, 2, (0.0, 0.0))[0] for i in range(nd)])
    var = xs.var(axis=0)
    ok = bool(worst <= 1e-6 and sums <= 1e-12 and np.all(np.abs(var / 0.5 - 1) <= 0.02))
    return CriterionResult(9, "Gaussian convolution powers", ok,
                           dict(worst_relative=worst, momentum_sum_error=sums, bridge_variance=var.tolist()))


# ---- 10 -----------------------------------------------------------------

def criterion_10(suite="full"):
    from .fourier import FourierParams, MajorizingKernel, estimate_fourier

    n = SIZES[suite]["fourier"]
    k, t = FOURIER_K, 0.05
    p = FourierParams(sigma=0.0, g=0.0, D=0.1, nu=0.1)
    amp = 0.01
    e = estimate_fourier(p, (f"{amp}*exp(-(k1^2+k2^2))", "0"), ("0", "0"), "chi", k, t, n, SEED)
    kk = k[0] ** 2 + k[1] ** 2
    exact = math.exp(-0.1 * kk * t) * amp * math.exp(-kk) / MajorizingKernel()(k)
    decay_ok = _close(e, complex(exact))

    q = FourierParams(sigma=1.0, g=0.5)
    ic = ("0.3*exp(-(k1^2+k2^2))", "0.1*k1*exp(-(k1^2+k2^2))")
    iz = ("0.3*exp(-(k1^2+k2^2)/2)", "0.05*k2*exp(-(k1^2+k2^2)/2)")
    sym = {}
    sym_ok = True
    for sp in ("chi", "zeta"):
        a = estimate_fourier(q, ic, iz, sp, k, t, n, SEED)
        b = estimate_fourier(q, ic, iz, sp, (-k[0], -k[1]), t, n, SEED + 1)
        gap = abs(a.mean - b.mean.conjugate())
        band = 3.0 * (a.standard_error + b.standard_error)
        sym_ok &= bool(gap <= band)
        sym[sp] = dict(plus=_f(a.mean), minus=_f(b.mean), gap=gap, band=band)
    return CriterionResult(10, "Fourier decay and conjugate symmetry", decay_ok and sym_ok,
                           dict(decay=dict(estimate=_f(e.mean), exact=exact, stderr=e.stderr_re),
                                symmetry=sym))


# ---- 11 -----------------------------------------------------------------

def _audit_ok(lhs, rhs):
    return abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1e-300)


def audit_engines(n_paths):
    """Worst relative mismatch per engine over ``n_paths`` sampled trees."""
    from .fourier import FourierParams, build_fourier_tree, fourier_tree_audit
    from .kernels import KernelSampler
    from .rng import RngStream
    from .soledge import build_soledge_tree, tree_audit
    from .tokam import TokamParams, build_tokam_tree, tokam_tree_audit

    out = {}
    sp = _fd_params()
    bad = 0
    for i in range(n_paths):
        tree = build_soledge_tree(sp, "N" if i % 2 else "Gamma", FD_POINTS[0], 0.2, RngStream(SEED, i))
        bad += not _audit_ok(*tree_audit(tree))
    out["soledge"] = bad
    tp = TokamParams(sigma=1.0, g=0.5)
    sampler = KernelSampler()
    bad = 0
    for i in range(n_paths):
        tree = build_tokam_tree(tp, "n" if i % 2 else "Omega", TOKAM_POINT, 0.1, RngStream(SEED, i), sampler)
        bad += not _audit_ok(*tokam_tree_audit(tree))
    out["tokam"] = bad
    fp = FourierParams(sigma=1.0, g=0.5)
    bad = 0
    for i in range(n_paths):
        try:
            tree = build_fourier_tree(fp, "chi" if i % 2 else "zeta", FOURIER_K, 0.05, RngStream(SEED, i))
        except ArithmeticError:
            continue
        bad += not _audit_ok(*fourier_tree_audit(tree))
    out["fourier"] = bad
    return out


def criterion_11(suite="full"):
    bad = audit_engines(SIZES[suite]["audit"])
    return CriterionResult(11, "path-weight telescoping", sum(bad.values()) == 0, dict(mismatches=bad))


# ---- 12 -----------------------------------------------------------------

def determinism_configs(n):
    return [
        dict(engine="soledge", n_samples=n, params=dict(q=2.0, D=0.1, nu=0.1),
             init=dict(N=FD_INIT[0], Gamma=FD_INIT[1]), points=[dict(coords=[0.3, 0.7], t=0.2)]),
        dict(engine="soledge-chi1", n_samples=n, params=dict(q=2.0, D=0.1, nu=0.1, eta=1.0),
             init=dict(N=FD_INIT[0], Gamma=FD_INIT[1]), points=[dict(coords=[0.3, 0.7], t=0.2)]),
        dict(engine="tokam-config", n_samples=n, params=dict(sigma=1.0, g=0.5),
             init=dict(n=TOKAM_INIT[0], Omega=TOKAM_INIT[1]), points=[dict(coords=list(TOKAM_POINT), t=0.05)]),
        dict(engine="tokam-fourier", n_samples=n, params=dict(sigma=1.0, g=0.5),
             init=dict(chi=list(FOURIER_INIT[0]), zeta=list(FOURIER_INIT[1])),
             points=[dict(coords=list(FOURIER_K), t=0.05)]),
    ]


def criterion_12(suite="full"):
    from .cli import records_to_csv, run_config

    rows, ok = {}, True
    for cfg in determinism_configs(SIZES[suite]["det"]):
        bodies = []
        for threads in (1, 8):
            c = dict(cfg, threads=threads, seed=SEED)
            bodies.append(records_to_csv(run_config(c)))
        same = bodies[0] == bodies[1]
        ok &= same
        rows[cfg["engine"]] = same
    return CriterionResult(12, "determinism across thread counts", ok, rows)


# ---- 13 -----------------------------------------------------------------

def criterion_13(suite="full"):
    from .fourier import fourier_bound_check
    from .soledge import ConvergenceOk, ConvergenceViolated, SoledgeParams, convergence_guard
    from .tokam import TokamParams, tokam_bound_check

    p = SoledgeParams(q=2.0)
    checks = {
        "soledge tM/q=0.999": isinstance(convergence_guard(p, 9.99, 0.2), ConvergenceOk),
        "soledge tM/q=1": isinstance(convergence_guard(p, 10.0, 0.2), ConvergenceViolated),
        "soledge tM/q=1.5": isinstance(convergence_guard(p, 15.0, 0.2), ConvergenceViolated),
    }
    tp = TokamParams(sigma=1.0, Lambda=0.0)
    t = math.log(2.0)
    checks.update({
        "tokam M=1.5": tokam_bound_check(tp, t, 1.5) == "ok",
        "tokam M=2": tokam_bound_check(tp, t, 2.0) == "ok",
        "tokam M=2.5": tokam_bound_check(tp, t, 2.5) == "violated",
        "tokam t->0": tokam_bound_check(tp, 1e-12, 1e6) == "ok",
        "fourier 0.9": fourier_bound_check([0.9, 0.9]) == "ok",
        "fourier 1.1": fourier_bound_check([0.9, 1.1]) == "violated",
        "fourier 1.0": fourier_bound_check([1.0, 1.0]) == "ok",
    })
    return CriterionResult(13, "guard reporting", all(checks.values()), checks)


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 14)}


def run_suite(suite="fast", only=None, echo=print):
    if suite not in SIZES:
        raise ValueError("suite must be 'fast' or 'full'")
    results = []
    for i, fn in CRITERIA.items():
        if only and i not in only:
            continue
        t0 = time.perf_counter()
        try:
            r = fn(suite)
        except Exception as exc:  # a crash is a failed criterion, reported with its message
            r = CriterionResult(i, fn.__name__, False, dict(error=f"{type(exc).__name__}: {exc}"))
        r.elapsed = time.perf_counter() - t0
        if echo:
            echo(r.line())
        results.append(r)
    return results
