"""Fourier-space TOKAM-2D: momentum-space branching for chi and zeta.

``F`` and ``Phi`` are the transforms of ``log n`` and ``phi``; dividing by a
strictly positive majorizing kernel ``gamma`` gives ``chi = F/gamma`` and
``zeta = Phi/gamma``.  A chi-line at momentum ``k`` is killed at rate
``D|k|^2`` (zeta: ``nu|k|^2``); at a kill it branches into children whose
momenta are drawn from the ``gamma`` convolution density and sum to ``k``.
Values multiply along the path directly; no labels and no backtracking.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

from .estimate import Estimate, Rejected, run_paths
from .expr import Expr, compile_expr, parse
from .rng import BranchAt, RngStream, sample_branch_time_exponential
from .soledge import derive_seed
from .tables import make_branch_table, poisson_tail_pmf, sample_poisson_tail

__all__ = [
    "MajorizingKernel",
    "FourierParams",
    "FourierNode",
    "gamma_convolution_power",
    "sample_conditioned_momenta",
    "build_fourier_tables",
    "series_coefficient",
    "build_fourier_tree",
    "evaluate_fourier_tree",
    "fourier_tree_audit",
    "estimate_fourier",
    "fourier_bound_check",
    "FOURIER_VARS",
]

FOURIER_VARS = ("k1", "k2")
SOURCE_VARS = ("k1", "k2", "t")
SPECIES = ("chi", "zeta")
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MajorizingKernel:
    """``gamma(k) = c * phi_s(k)``, ``phi_s`` the isotropic Gaussian of per-axis variance s^2."""

    s: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not (self.s > 0 and self.c > 0):
            raise ValueError("kernel scale and amplitude must be positive")

    def __call__(self, k) -> float:
        return gamma_convolution_power(self, 1, k)


def gamma_convolution_power(kernel: MajorizingKernel, n: int, k) -> float:
    """``gamma^{*n}(k) = c^n phi_{s sqrt(n)}(k)``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    var = n * kernel.s ** 2
    k2 = k[0] * k[0] + k[1] * k[1]
    return kernel.c ** n * math.exp(-0.5 * k2 / var) / (TWO_PI * var)


def sample_conditioned_momenta(s: RngStream, kernel: MajorizingKernel, n: int, k):
    """First ``n-1`` of ``n`` i.i.d. N(0, s^2 I) momenta conditioned to sum to ``k``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n == 1:
        return []
    eta = [(kernel.s * s.normal(), kernel.s * s.normal()) for _ in range(n)]
    c1 = (k[0] - sum(e[0] for e in eta)) / n
    c2 = (k[1] - sum(e[1] for e in eta)) / n
    return [(e[0] + c1, e[1] + c2) for e in eta[:-1]]


def _last(k, xis):
    return (k[0] - sum(x[0] for x in xis), k[1] - sum(x[1] for x in xis))


@dataclass(frozen=True)
class FourierParams:
    sigma: float = 1.0
    Lambda: float = 0.0
    D: float = 0.1
    nu: float = 0.1
    g: float = 0.0
    # source transform (real, imaginary) over (k1, k2, t)
    S: tuple = ("0", "0")
    kernel: MajorizingKernel = MajorizingKernel()
    k_min: float = 1e-3

    def __post_init__(self):
        if self.sigma < 0 or self.g < 0:
            raise ValueError("sigma and g must be non-negative")
        if not (self.D > 0 and self.nu > 0):
            raise ValueError("D and nu must be positive")
        if not self.k_min > 0:
            raise ValueError("k_min must be positive")
        object.__setattr__(self, "S", _pair(self.S, SOURCE_VARS))

    @property
    def rate(self) -> float:
        return self.sigma * math.exp(self.Lambda)


def _pair(p, allowed=FOURIER_VARS):
    if isinstance(p, (str, Expr)):
        p = (p, "0")
    re, im = p
    return (parse(re, allowed) if isinstance(re, str) else re,
            parse(im, allowed) if isinstance(im, str) else im)


# ---- tables -------------------------------------------------------------

def _check_k(k):
    if k[0] == 0 and k[1] == 0:
        raise ValueError("k = 0 is excluded (branch rates and multipliers are singular)")


def build_fourier_tables(params: FourierParams, k):
    """(table_chi, table_zeta) at momentum ``k``.

    Coefficients are the momentum prefactors; the kinematic factors
    (``(k1-xi1) xi2`` etc.) and the per-``n`` series coefficients multiply
    coefficient and multiplier alike once the children are drawn.
    """
    _check_k(k)
    ker = params.kernel
    k2 = k[0] ** 2 + k[1] ** 2
    g1 = gamma_convolution_power(ker, 1, k)
    g2 = gamma_convolution_power(ker, 2, k)
    lam = params.rate
    chi = make_branch_table([
        ("a", g2 / (TWO_PI * params.D * k2 * g1), 1.0, 2),
        ("b", lam, TWO_PI * lam, "poisson-tail"),
        ("c", -g2 / (TWO_PI * k2 * g1), params.D, 2),
        ("s", 1.0 / (params.D * k2), TWO_PI, 0),
    ])
    zeta = make_branch_table([
        ("a'", g2 / (TWO_PI * params.nu * k2 * k2 * g1), 1.0 / TWO_PI, 2),
        ("b'", params.sigma, params.sigma, "poisson-tail"),
        ("chi", -1j * params.g * k[1] / (params.nu * k2 * k2), params.g, 1),
    ])
    return chi, zeta


def series_coefficient(params: FourierParams, species: str, n: int, k) -> float:
    """Per-``n`` factor of the ``e^{-phi}`` series entry (0 for n = 0, k != 0)."""
    if n == 0:
        return 0.0
    k2 = k[0] ** 2 + k[1] ** 2
    ker = params.kernel
    ratio = gamma_convolution_power(ker, n, k) / gamma_convolution_power(ker, 1, k)
    base = (-1) ** n * ratio / (math.factorial(n) * TWO_PI ** (n - 1))
    if species == "chi":
        return -base / (params.D * k2)
    return math.exp(params.Lambda) * base / (params.nu * k2 * k2)


# ---- trees ----------------------------------------------------------------

@dataclass
class FourierNode:
    species: str
    k: tuple
    time_remaining: float
    label: str  # Leaf, SourceLeaf, Branch, Zero
    weight: complex = 1.0
    children: list = field(default_factory=list)
    prob: float = 1.0
    raw: complex = 1.0
    tag: str = ""

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


class _Infrared(Exception):
    pass


class _Builder:
    def __init__(self, params: FourierParams, s: RngStream, max_depth: Optional[int]):
        self.p = params
        self.s = s
        self.max_depth = max_depth
        self._tables = {}

    def tables(self, k):
        t = self._tables.get(k)
        if t is None:
            if len(self._tables) > 4096:
                self._tables.clear()
            t = build_fourier_tables(self.p, k)
            self._tables[k] = t
        return t

    def line(self, species, k, t_rem, depth):
        p = self.p
        k2 = k[0] ** 2 + k[1] ** 2
        if k2 < p.k_min ** 2:
            raise _Infrared
        rate = (p.D if species == "chi" else p.nu) * k2
        if self.max_depth is not None and depth >= self.max_depth:
            w = math.exp(-rate * t_rem)
            return FourierNode(species, k, 0.0, "Leaf", w, [], 1.0, w)
        outcome = sample_branch_time_exponential(self.s, rate, t_rem)
        if not isinstance(outcome, BranchAt):
            return FourierNode(species, k, 0.0, "Leaf")
        horizon = t_rem - outcome.time
        tchi, tzeta = self.tables(k)
        entry = (tchi if species == "chi" else tzeta).sample(self.s)
        return self._vertex(species, entry, k, horizon, depth)

    def _vertex(self, species, e, k, horizon, depth):
        s, ker = self.s, self.p.kernel
        prob, mult, raw = e.probability, e.multiplier, e.coefficient
        d1 = depth + 1
        tag = e.tag
        if tag == "s":
            return FourierNode(species, k, horizon, "SourceLeaf", mult, [], prob, raw, tag)
        if tag in ("b", "b'"):
            n = sample_poisson_tail(s, 0)
            pn = poisson_tail_pmf(n, 0)
            cn = series_coefficient(self.p, species, n, k)
            if n == 0:
                return FourierNode(species, k, horizon, "Zero", 0.0, [], prob * pn, raw * cn, tag)
            xis = sample_conditioned_momenta(s, ker, n, k)
            moms = xis + [_last(k, xis)]
            kids = [self.line("zeta", q, horizon, d1) for q in moms]
            return FourierNode(species, k, horizon, "Branch", mult * cn / pn, kids, prob * pn, raw * cn,
                               f"{tag}{n}")
        if tag == "chi":
            kid = self.line("chi", k, horizon, d1)
            return FourierNode(species, k, horizon, "Branch", mult, [kid], prob, raw, tag)
        (xi,) = sample_conditioned_momenta(s, ker, 2, k)
        rest = _last(k, [xi])
        if tag == "a":
            # (k1 - xi1) xi2 {zeta(k-xi) chi(xi) - chi(k-xi) zeta(xi)}, 1/2 each
            kin = rest[0] * xi[1]
            if s.uniform() < 0.5:
                sub, kids = 1.0, [self.line("zeta", rest, horizon, d1), self.line("chi", xi, horizon, d1)]
            else:
                sub, kids = -1.0, [self.line("chi", rest, horizon, d1), self.line("zeta", xi, horizon, d1)]
        elif tag == "c":
            # {(k1 - xi1) xi1 + (k2 - xi2) xi2} chi(k-xi) chi(xi), 1/2 each
            axis = 0 if s.uniform() < 0.5 else 1
            kin, sub = rest[axis] * xi[axis], 1.0
            kids = [self.line("chi", rest, horizon, d1), self.line("chi", xi, horizon, d1)]
        else:  # a'
            kin = rest[0] * xi[1] * (xi[0] ** 2 + xi[1] ** 2 - rest[0] ** 2 - rest[1] ** 2)
            sub = 1.0
            kids = [self.line("zeta", rest, horizon, d1), self.line("zeta", xi, horizon, d1)]
        half = 0.5 if tag in ("a", "c") else 1.0
        return FourierNode(species, k, horizon, "Branch", mult * kin * sub / half, kids, prob * half,
                           raw * kin * sub, tag)


def build_fourier_tree(params: FourierParams, species: str, k, t: float, s: RngStream,
                       max_depth: Optional[int] = None) -> FourierNode:
    """One backward tree; raises ``ArithmeticError`` on the infrared guard."""
    if species not in SPECIES:
        raise ValueError(f"species must be 'chi' or 'zeta', got {species!r}")
    _check_k(k)
    if not t > 0:
        raise ValueError("t must be positive")
    try:
        return _Builder(params, s, max_depth).line(species, (float(k[0]), float(k[1])), float(t), 0)
    except _Infrared:
        raise ArithmeticError(f"child momentum below k_min={params.k_min}") from None


class _Leaves:
    def __init__(self, params, init_chi, init_zeta):
        self.ker = params.kernel
        self.f = {sp: tuple(compile_expr(e) for e in pair)
                  for sp, pair in (("chi", _pair(init_chi)), ("zeta", _pair(init_zeta)))}
        self.src = tuple(compile_expr(e) for e in params.S)

    def leaf(self, species, k):
        re, im = self.f[species]
        env = {"k1": k[0], "k2": k[1]}
        return complex(re(env), im(env)) / gamma_convolution_power(self.ker, 1, k)

    def source(self, k, t):
        env = {"k1": k[0], "k2": k[1], "t": t}
        return complex(self.src[0](env), self.src[1](env)) / gamma_convolution_power(self.ker, 1, k)


def _eval(node: FourierNode, leaves: _Leaves) -> complex:
    lab = node.label
    if lab == "Leaf":
        v = leaves.leaf(node.species, node.k)
    elif lab == "SourceLeaf":
        v = leaves.source(node.k, node.time_remaining)
    elif lab == "Zero":
        return 0j
    else:
        v = 1.0
        for c in node.children:
            v *= _eval(c, leaves)
    return node.weight * v


def evaluate_fourier_tree(tree: FourierNode, params: FourierParams, init_chi, init_zeta) -> complex:
    return complex(_eval(tree, _Leaves(params, init_chi, init_zeta)))


def fourier_tree_audit(tree: FourierNode):
    """(prod of prob * weight, prod of raw coefficients) over the vertices."""
    lhs, rhs = 1.0 + 0j, 1.0 + 0j
    stack = [tree]
    while stack:
        n = stack.pop()
        lhs *= n.prob * n.weight
        rhs *= n.raw
        stack.extend(n.children)
    return lhs, rhs


def fourier_bound_check(declared_caps) -> str:
    """"ok" iff every declared sup bound is at most 1."""
    caps = list(declared_caps.values()) if isinstance(declared_caps, dict) else list(declared_caps)
    return "ok" if all(c <= 1.0 for c in caps) else "violated"


class _FourierPath:
    def __init__(self, params, species, k, t, init_chi, init_zeta, max_depth):
        self.params = params
        self.species = species
        self.k = (float(k[0]), float(k[1]))
        self.t = float(t)
        self.init = (init_chi, init_zeta)
        self.max_depth = max_depth
        self._leaves = None

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_leaves"] = None
        return d

    def __call__(self, s: RngStream):
        if self._leaves is None:
            self._leaves = _Leaves(self.params, *self.init)
        try:
            tree = _Builder(self.params, s, self.max_depth).line(self.species, self.k, self.t, 0)
        except _Infrared:
            return Rejected("infrared")
        return complex(_eval(tree, self._leaves))


def estimate_fourier(params: FourierParams, init_chi, init_zeta, species: str, k, t: float,
                     n_samples: int, seed: int, workers: Optional[int] = None,
                     max_depth: Optional[int] = None, caps=None) -> Estimate:
    """Complex estimate of ``chi(k, t)`` or ``zeta(k, t)``.

    ``init_chi``/``init_zeta`` are the initial transforms ``F(k,0)``,
    ``Phi(k,0)`` as (real, imaginary) expression pairs in ``k1, k2``; leaves
    divide them by ``gamma``.
    """
    if species not in SPECIES:
        raise ValueError(f"species must be 'chi' or 'zeta', got {species!r}")
    _check_k(k)
    flags = []
    if caps is not None:
        flags.append("bound-" + fourier_bound_check(caps))
    fn = _FourierPath(params, species, k, t, _pair(init_chi), _pair(init_zeta), max_depth)
    return run_paths(fn, n_samples, derive_seed(seed, "fourier", species), workers, flags=flags)
