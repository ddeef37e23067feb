"""Configuration-space TOKAM-2D: branching process for ``n`` and ``Omega``.

With ``lam = sigma e^Lambda`` and ``Omega = Psi/h`` the integral equations are

    n(x,t)     = e^{-lam t} e^{tD Lap} n0 + int_0^t ds lam e^{-lam s} e^{sD Lap} {F_n}(x, t-s)
    Omega(x,t) = e^{-lam t} e^{t nu Lap} Omega0 + int_0^t ds lam e^{-lam s} e^{s nu Lap} {F_Omega}(x, t-s)

where ``F/lam`` is a sum of branch terms (source, Poisson brackets, the
``e^{-phi}`` series, the delta term, the constant kill and the ``log n``
drive).  Each line is a Brownian motion killed at rate ``lam``; at a kill the
branch is drawn from the tables below.  Kernel integrals ``(K Psi)(x)`` are
sampled with :class:`~solbranch.kernels.KernelSampler`, the sign of the
kernel going into the weight.  Derivatives and ``log`` are operator labels
applied to jets in a shared displacement of all leaf positions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .estimate import Estimate, Rejected, run_paths
from .expr import Expr, eval_jet, parse
from .jets import DivisionGuard, DomainGuard, Jet
from .kernels import KernelSampler
from .rng import BranchAt, RngStream, sample_branch_time_exponential
from .soledge import derive_seed
from .tables import make_branch_table, poisson_tail_pmf, sample_poisson_tail

__all__ = [
    "TokamParams",
    "TokamNode",
    "build_tokam_tables",
    "unit_tables",
    "build_tokam_tree",
    "evaluate_tokam_tree",
    "estimate_tokam",
    "tokam_bound_check",
    "tokam_tree_audit",
    "TOKAM_VARS",
    "SPECIES",
]

TOKAM_VARS = ("x1", "x2")
SOURCE_VARS = ("x1", "x2", "t")
SPECIES = ("n", "Omega")
LABELS = ("DX1", "DX2", "Log", "PowerJ", "KernelFactor", "Product", "Leaf", "Kill", "SourceLeaf")


@dataclass(frozen=True)
class TokamParams:
    sigma: float = 1.0
    Lambda: float = 0.0
    D: float = 0.1
    nu: float = 0.1
    g: float = 0.0
    S: object = "0"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not (self.D > 0 and self.nu > 0):
            raise ValueError("D and nu must be positive")
        if self.g < 0:
            raise ValueError("g must be non-negative")
        if not math.isfinite(self.Lambda):
            raise ValueError("Lambda must be finite")
        if isinstance(self.S, str):
            object.__setattr__(self, "S", parse(self.S, SOURCE_VARS))

    @property
    def rate(self) -> float:
        return self.sigma * math.exp(self.Lambda)


# ---- tables -----------------------------------------------------------

# (tag, coefficient per unit factor, weight, factor, arity)
def _unit_raw(p: TokamParams):
    lam = p.rate
    n_raw = [
        ("source", 1.0 / lam, 1.0, None, 0),
        ("B1", -1.0 / lam, 1.0, "N1", 2),
        ("B2", 1.0 / lam, 1.0, "N2", 2),
        ("Sigma", 1.0, lam, None, "poisson-tail"),
    ]
    om_raw = [
        ("kill", p.sigma * (1.0 - math.exp(p.Lambda)) / lam, p.sigma, "1/h", 0),
        ("B1", -1.0 / lam, 1.0, "N1", 2),
        ("B2", 1.0 / lam, 1.0, "N2", 2),
        ("delta", 1.0, lam, "N_delta/h", 1),
        ("Sigma", 1.0, lam, None, "poisson-tail"),
        ("g", -p.g / lam, p.g, "1/h", 1),
    ]
    return n_raw, om_raw


def unit_tables(params: TokamParams):
    """Tables with the x-dependent factor left out of every coefficient.

    The factor named in ``arity``'s companion (``_FACTORS``) multiplies both
    the coefficient and the multiplier at use; probabilities do not depend
    on x.
    """
    n_raw, om_raw = _unit_raw(params)
    tn = make_branch_table([(t, c, w, a) for t, c, w, _, a in n_raw])
    to = make_branch_table([(t, c, w, a) for t, c, w, _, a in om_raw])
    factors = {("n", t): f for t, _, _, f, _ in n_raw}
    factors.update({("Omega", t): f for t, _, _, f, _ in om_raw})
    return tn, to, factors


def _factor(name, nz, hx):
    if name is None:
        return 1.0
    if name == "N1":
        return nz.N1
    if name == "N2":
        return nz.N2
    if name == "1/h":
        return 1.0 / hx
    if name == "N_delta/h":
        return nz.N_delta / hx
    raise KeyError(name)


def build_tokam_tables(params: TokamParams, h, x):
    """(table_n, table_Omega) at ``x`` with the x-dependent factors folded in.

    Series entries keep coefficient 1; their per-``j`` coefficients
    ``-(-1)^j N^j / j!`` (``/h`` for Omega) come from :func:`series_coefficient`.
    """
    sampler = h if isinstance(h, KernelSampler) else KernelSampler(h)
    nz = sampler.normalizations(x)
    hx = sampler.h(x)
    if hx == 0.0:
        raise ValueError(f"weight h vanishes at x={tuple(x)}; the Omega factors 1/h are undefined there")
    n_raw, om_raw = _unit_raw(params)
    tn = make_branch_table([(t, c * _factor(f, nz, hx) if c else 0.0, w, a) for t, c, w, f, a in n_raw])
    to = make_branch_table([(t, c * _factor(f, nz, hx) if c else 0.0, w, a) for t, c, w, f, a in om_raw])
    return tn, to


def series_coefficient(species: str, j: int, N: float, hx: float) -> float:
    c = -((-1) ** j) * N ** j / math.factorial(j)
    return c / hx if species == "Omega" else c


MIN_J = {"n": 1, "Omega": 2}


# ---- trees --------------------------------------------------------------

@dataclass
class TokamNode:
    species: str
    x: tuple
    time_remaining: float
    label: str
    weight: float = 1.0
    children: list = field(default_factory=list)
    prob: float = 1.0
    raw: float = 1.0
    j: int = 0  # PowerJ arity

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def count(self, label: str) -> int:
        return (self.label == label) + sum(c.count(label) for c in self.children)

    def n_branchings(self) -> int:
        return (self.prob != 1.0 or self.raw != 1.0) + sum(c.n_branchings() for c in self.children)


class _TooDeep(Exception):
    pass


class _Builder:
    def __init__(self, params: TokamParams, sampler: KernelSampler, s: RngStream,
                 max_depth: Optional[int], max_order: Optional[int]):
        self.p = params
        self.kern = sampler
        self.s = s
        self.max_depth = max_depth
        self.max_order = max_order
        self.tn, self.to, self.factors = unit_tables(params)
        self.lam = params.rate

    def _move(self, x, diff, dt):
        if dt <= 0:
            return x
        sd = math.sqrt(2.0 * diff * dt)
        return (x[0] + sd * self.s.normal(), x[1] + sd * self.s.normal())

    def line(self, species, x, t_rem, depth, order):
        """One line from ``x`` with ``t_rem`` left; ``order`` = DX labels above."""
        p, s = self.p, self.s
        diff = p.D if species == "n" else p.nu
        if self.max_depth is not None and depth >= self.max_depth:
            z = self._move(x, diff, t_rem)
            w = math.exp(-self.lam * t_rem)
            return TokamNode(species, z, 0.0, "Leaf", w, [], 1.0, w)
        outcome = sample_branch_time_exponential(s, self.lam, t_rem)
        if not isinstance(outcome, BranchAt):
            return TokamNode(species, self._move(x, diff, t_rem), 0.0, "Leaf")
        xb = self._move(x, diff, outcome.time)
        horizon = t_rem - outcome.time
        table = self.tn if species == "n" else self.to
        entry = table.sample(s)
        return self._vertex(species, entry, xb, horizon, depth, order)

    def _kernel_child(self, xb, horizon, which, depth, order):
        y, sign = self.kern.sample(self.s, xb, which)
        child = self.line("Omega", y, horizon, depth + 1, order)
        return TokamNode("Omega", y, horizon, "KernelFactor", float(sign), [child])

    def _dx(self, axis, child, xb, horizon, order):
        if self.max_order is not None and order + 1 > self.max_order:
            raise _TooDeep
        return TokamNode(child.species, xb, horizon, "DX1" if axis == 0 else "DX2", 1.0, [child])

    def _vertex(self, species, entry, xb, horizon, depth, order):
        tag = entry.tag
        fac = self.factors[(species, tag)]
        prob, mult, raw = entry.probability, entry.multiplier, entry.coefficient
        kern = self.kern
        need_norm = fac in ("N1", "N2", "N_delta/h") or tag == "Sigma"
        nz = kern.normalizations(xb) if need_norm else None
        hx = kern.h(xb) if species == "Omega" else 1.0
        f = _factor(fac, nz, hx) if fac else 1.0
        mult, raw = mult * f, raw * f
        d1 = depth + 1
        if species == "n":
            if tag == "source":
                return TokamNode("n", xb, horizon, "SourceLeaf", mult, [], prob, raw)
            if tag in ("B1", "B2"):
                # B1: -N1 <s Omega(y)>_rho1 d_2 n ; B2: +N2 <s Omega(y)>_rho2 d_1 n
                axis = 1 if tag == "B1" else 0
                line = self.line("n", xb, horizon, d1, order + 1)
                kid = self._kernel_child(xb, horizon, "rho_1" if tag == "B1" else "rho_2", depth, order)
                return TokamNode("n", xb, horizon, "Product", mult,
                                 [self._dx(axis, line, xb, horizon, order), kid], prob, raw)
            # series: n * prod_j <s Omega(y_i)>_rho
            j = sample_poisson_tail(self.s, MIN_J["n"])
            pj = poisson_tail_pmf(j, MIN_J["n"])
            cj = series_coefficient("n", j, nz.N, 1.0)
            line = self.line("n", xb, horizon, d1, order)
            kids = [self._kernel_child(xb, horizon, "rho", depth, order) for _ in range(j)]
            power = TokamNode("Omega", xb, horizon, "PowerJ", 1.0, kids, j=j)
            return TokamNode("n", xb, horizon, "Product", mult * cj / pj, [line, power],
                             prob * pj, raw * cj)
        # Omega
        if tag == "kill":
            return TokamNode("Omega", xb, horizon, "Kill", mult, [], prob, raw)
        if tag in ("B1", "B2"):
            axis = 1 if tag == "B1" else 0
            kid = self._kernel_child(xb, horizon, "rho_1" if tag == "B1" else "rho_2", depth, order)
            if self.s.uniform() < 0.5:
                # (a): d_i Omega(x) Omega(y)
                line = self.line("Omega", xb, horizon, d1, order + 1)
                first = self._dx(axis, line, xb, horizon, order)
                sub = 1.0
            else:
                # (b): Omega(x) d_i log h(x) Omega(y)
                first = self.line("Omega", xb, horizon, d1, order)
                sub = kern.weight.grad_log(xb[0], xb[1])[axis]
            return TokamNode("Omega", xb, horizon, "Product", mult * 2.0 * sub, [first, kid],
                             prob * 0.5, raw * sub)
        if tag == "delta":
            kid = self._kernel_child(xb, horizon, "rho_delta", depth, order)
            return TokamNode("Omega", xb, horizon, "Product", mult, [kid], prob, raw)
        if tag == "Sigma":
            j = sample_poisson_tail(self.s, MIN_J["Omega"])
            pj = poisson_tail_pmf(j, MIN_J["Omega"])
            cj = series_coefficient("Omega", j, nz.N, hx)
            kids = [self._kernel_child(xb, horizon, "rho", depth, order) for _ in range(j)]
            power = TokamNode("Omega", xb, horizon, "PowerJ", 1.0, kids, j=j)
            return TokamNode("Omega", xb, horizon, "Product", mult * cj / pj, [power], prob * pj, raw * cj)
        # g: -g/h d_2 log n
        line = self.line("n", xb, horizon, d1, order + 1)
        log = TokamNode("n", xb, horizon, "Log", 1.0, [line])
        return TokamNode("Omega", xb, horizon, "Product", mult,
                         [self._dx(1, log, xb, horizon, order)], prob, raw)


def build_tokam_tree(params: TokamParams, species: str, x, t: float, s: RngStream,
                     sampler: Optional[KernelSampler] = None, max_depth: Optional[int] = None,
                     max_order: Optional[int] = None) -> TokamNode:
    """Sample one backward tree for ``species`` in {"n", "Omega"} from ``x``."""
    if species not in SPECIES:
        raise ValueError(f"species must be 'n' or 'Omega', got {species!r}")
    if not t > 0:
        raise ValueError("t must be positive")
    b = _Builder(params, sampler or KernelSampler(), s, max_depth, max_order)
    from .jets import OrderGuard

    try:
        return b.line(species, (float(x[0]), float(x[1])), float(t), 0, 0)
    except _TooDeep:
        raise OrderGuard(f"tree needs derivatives beyond order {max_order}") from None


def required_order(node: TokamNode) -> int:
    below = max((required_order(c) for c in node.children), default=0)
    return below + (node.label in ("DX1", "DX2"))


class _Leaves:
    def __init__(self, init_n: Expr, init_Omega: Expr, S: Expr):
        self.exprs = {"n": init_n, "Omega": init_Omega}
        self.S = S

    def leaf(self, species, z, order):
        return eval_jet(self.exprs[species], {"x1": z[0], "x2": z[1]}, order, TOKAM_VARS)

    def source(self, z, t, order):
        return eval_jet(self.S, {"x1": z[0], "x2": z[1], "t": t}, order, TOKAM_VARS)


def _eval(node: TokamNode, k: int, leaves: _Leaves) -> Jet:
    lab, ch = node.label, node.children
    if lab == "Leaf":
        j = leaves.leaf(node.species, node.x, k)
    elif lab == "SourceLeaf":
        j = leaves.source(node.x, node.time_remaining, k)
    elif lab == "Kill":
        j = Jet.constant(1.0, 2, k)
    elif lab == "DX1":
        j = _eval(ch[0], k + 1, leaves).d(0)
    elif lab == "DX2":
        j = _eval(ch[0], k + 1, leaves).d(1)
    elif lab == "Log":
        j = _eval(ch[0], k, leaves).log()
    elif lab in ("Product", "PowerJ", "KernelFactor"):
        j = _eval(ch[0], k, leaves)
        for c in ch[1:]:
            j = j * _eval(c, k, leaves)
    else:
        raise ValueError(f"unknown label {lab!r}")
    if node.weight != 1.0:
        j = j * node.weight
    return j


def evaluate_tokam_tree(tree: TokamNode, init_n, init_Omega, S="0", max_jet_order: int = 8):
    """Path value (weights applied vertex by vertex) or :class:`Rejected`."""
    leaves = _Leaves(_expr(init_n), _expr(init_Omega), _expr(S, SOURCE_VARS))
    if required_order(tree) > max_jet_order:
        return Rejected("jet-order")
    try:
        return _eval(tree, 0, leaves).c[0]
    except DivisionGuard:
        return Rejected("division")
    except DomainGuard:
        return Rejected("domain")


def tokam_tree_audit(tree: TokamNode):
    """(prod of prob * weight, prod of raw coefficients) over branch vertices.

    Kernel signs enter both sides; depth-limited leaves carry their survival
    weight on both sides.
    """
    lhs, rhs = 1.0, 1.0
    stack = [tree]
    while stack:
        n = stack.pop()
        if n.label == "KernelFactor":
            lhs *= n.weight
            rhs *= n.weight
        else:
            lhs *= n.prob * n.weight
            rhs *= n.raw
        stack.extend(n.children)
    return lhs, rhs


def tree_max_multiplier(tree: TokamNode) -> float:
    m, stack = 0.0, [tree]
    while stack:
        n = stack.pop()
        if n.prob != 1.0:
            m = max(m, abs(n.weight))
        stack.extend(n.children)
    return m


def _expr(e, allowed=TOKAM_VARS):
    return parse(e, allowed) if isinstance(e, str) else e


# ---- estimation ---------------------------------------------------------

def tokam_bound_check(params: TokamParams, t: float, M_cap: float) -> str:
    """"ok" iff ``M_cap <= 1/(1 - exp(-sigma e^Lambda t))``."""
    if t <= 0:
        return "ok"
    threshold = 1.0 / -math.expm1(-params.rate * t)
    return "ok" if M_cap <= threshold else "violated"


class _TokamPath:
    def __init__(self, params, species, x, t, init_n, init_Omega, h, max_jet_order, max_depth):
        self.params = params
        self.species = species
        self.x = (float(x[0]), float(x[1]))
        self.t = float(t)
        self.init = (init_n, init_Omega)
        self.h = h
        self.max_jet_order = max_jet_order
        self.max_depth = max_depth
        self._sampler = None
        self._leaves = None

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_sampler"] = None
        d["_leaves"] = None
        return d

    def __call__(self, s: RngStream):
        if self._sampler is None:
            self._sampler = KernelSampler(self.h)
            self._leaves = _Leaves(self.init[0], self.init[1], self.params.S)
        b = _Builder(self.params, self._sampler, s, self.max_depth, self.max_jet_order)
        try:
            tree = b.line(self.species, self.x, self.t, 0, 0)
            return _eval(tree, 0, self._leaves).c[0]
        except _TooDeep:
            return Rejected("jet-order")
        except DivisionGuard:
            return Rejected("division")
        except DomainGuard:
            return Rejected("domain")


def estimate_tokam(params: TokamParams, init_n, init_Omega, species: str, x, t: float,
                   n_samples: int, seed: int, h="default", max_jet_order: int = 8,
                   workers: Optional[int] = None, max_depth: Optional[int] = None,
                   M_cap: Optional[float] = None) -> Estimate:
    """Estimate of ``n(x, t)`` or ``Omega(x, t)``.

    ``max_depth=1`` restricts trees to at most one branching (the first Picard
    iterate in expectation).
    """
    if species not in SPECIES:
        raise ValueError(f"species must be 'n' or 'Omega', got {species!r}")
    init_n, init_Omega = _expr(init_n), _expr(init_Omega)
    flags = []
    if M_cap is not None:
        flags.append("bound-" + tokam_bound_check(params, t, M_cap))
    fn = _TokamPath(params, species, x, t, init_n, init_Omega, h, max_jet_order, max_depth)
    return run_paths(fn, n_samples, derive_seed(seed, "tokam", species), workers, flags=flags)
