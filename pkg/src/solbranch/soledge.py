"""SOLEDGE-2D: the chi=1 closed form and the chi=0 branching process.

The chi=0 integral equations are

    N(t)     = e^{tD d_r^2} N(0) - (1/q) int_0^t dtau e^{tau D d_r^2} d_theta Gamma(t-tau)
    Gamma(t) = e^{t nu d_r^2} Gamma(0)
               - (1/q) int_0^t dtau e^{tau nu d_r^2} d_theta {Gamma^2/N + N}(t-tau)

and are sampled backwards in time: a line of remaining time ``t_rem``
reaches zero with probability ``p`` (weight ``1/p``), otherwise it is
interrupted at a uniform time and picks up the weight of its branch.  Only r
diffuses; theta enters through jets, so every leaf evaluates its initial
datum as a jet in a shared displacement of theta and the labels
(DTheta, Square, Reciprocal, Product) are applied on the way back up.
"""
from __future__ import annotations

import hashlib
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .estimate import Estimate, Rejected, run_paths
from .expr import Expr, compile_expr, eval_jet, parse, variables
from .jets import DivisionGuard, DomainGuard, Jet, OrderGuard
from .rng import BranchAt, RngStream, sample_gaussian_step, sample_interrupt_uniform
from .tables import make_branch_table

__all__ = [
    "SoledgeParams",
    "PathNode",
    "N",
    "GAMMA",
    "solve_chi1",
    "build_soledge_tree",
    "evaluate_soledge_tree",
    "estimate_soledge",
    "convergence_guard",
    "ConvergenceOk",
    "ConvergenceViolated",
    "tree_audit",
    "required_order",
    "interrupt_tables",
    "sample_soledge_value",
    "derive_seed",
    "SOLEDGE_VARS",
]

SOLEDGE_VARS = ("r", "theta")
N, GAMMA = "N", "Gamma"
LABELS = ("DTheta", "Square", "Reciprocal", "Product", "Leaf", "SpeciesSwitch", "Sum")


@dataclass(frozen=True)
class SoledgeParams:
    q: float = 1.0
    D: float = 0.1
    nu: float = 0.1
    eta: float = 1.0
    Gamma0: float = 0.0
    p_survive: float = 0.5
    # False drops the Gamma^2/N term (the linear system)
    nonlinear: bool = True
    # "literal": a line reaches zero (weight 1/p) or is interrupted;
    # "control": it always reaches zero and is also interrupted w.p. 1-p
    scheme: str = "control"

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")
        if self.D < 0 or self.nu < 0:
            raise ValueError("D and nu must be non-negative")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not 0.0 < self.p_survive < 1.0:
            raise ValueError("p_survive must lie in (0, 1)")
        if self.scheme not in ("literal", "control"):
            raise ValueError(f"scheme must be 'literal' or 'control', got {self.scheme!r}")


@dataclass
class PathNode:
    species: str
    r: float
    time_remaining: float
    label: str
    weight: float = 1.0
    children: list = field(default_factory=list)
    # probability (density in tau for interrupts) of the sampled event and
    # its raw integral-equation coefficient; used by the weight audit
    prob: float = 1.0
    raw: float = 1.0

    def count(self, label: str) -> int:
        return (self.label == label) + sum(c.count(label) for c in self.children)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)

    def leaves(self):
        if self.label == "Leaf":
            yield self
        for c in self.children:
            yield from c.leaves()

    def total_weight(self) -> float:
        w = self.weight
        for c in self.children:
            w *= c.total_weight()
        return w


# ---- chi = 1 ----------------------------------------------------------

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(80)


def _heat(f, r, s):
    """(e^{s d_r^2} f)(r) by Gauss-Hermite; ``f`` maps an r-array to values."""
    if s <= 0:
        return f(np.array([r]))[0]
    nodes = r + 2.0 * math.sqrt(s) * _GH_X
    return float(np.dot(_GH_W, f(nodes))) / math.sqrt(math.pi)


def _as_expr(e, allowed=SOLEDGE_VARS) -> Expr:
    return parse(e, allowed) if isinstance(e, str) else e


def solve_chi1(params: SoledgeParams, init_N, init_Gamma, point, t: float, rtol: float = 1e-8):
    """(N, Gamma) at ``point = (r, theta)`` for the chi=1 relaxation system."""
    if t < 0:
        raise ValueError("t must be non-negative")
    init_N, init_Gamma = _as_expr(init_N), _as_expr(init_Gamma)
    r, theta = point
    fN, fG = compile_expr(init_N), compile_expr(init_Gamma)

    def vals(f):
        return lambda rr: np.broadcast_to(np.asarray(f({"r": rr, "theta": theta}), dtype=float), rr.shape)

    def dtheta_gamma(rr):
        j = eval_jet(init_Gamma, {"r": rr, "theta": theta}, 1)
        return np.broadcast_to(np.asarray(j.c[1], dtype=float), rr.shape)

    if t == 0:
        return float(fN({"r": r, "theta": theta})), float(fG({"r": r, "theta": theta}))
    decay = math.exp(-t / params.eta)
    gamma = decay * _heat(vals(fG), r, params.nu * t) + params.Gamma0 * (1.0 - decay)
    head = _heat(vals(fN), r, params.D * t)

    def integrand(tau):
        return _heat(dtheta_gamma, r, params.D * (t - tau) + params.nu * tau)

    coupling, err = integrate.quad(integrand, 0.0, t, epsrel=rtol, epsabs=1e-14, limit=200)
    if err > max(rtol * abs(coupling), 1e-12):
        raise ArithmeticError(f"coupling quadrature did not converge (error estimate {err:.3g})")
    n_val = decay * (head - coupling / params.q)
    if not (math.isfinite(n_val) and math.isfinite(gamma)):
        raise ArithmeticError("chi=1 solution is not finite (initial data undefined near the point?)")
    return n_val, gamma


# ---- chi = 0 trees ----------------------------------------------------

class _TooDeep(Exception):
    pass


def interrupt_tables(params: SoledgeParams) -> dict:
    """Branch tables at an interrupt, per unit remaining time.

    The coefficient of each branch is ``-t_rem / (q (1-p))`` (the Duhamel
    coefficient ``-1/q`` over the interrupt density ``(1-p)/t_rem``); tables
    are built for ``t_rem = 1`` and multipliers scale linearly with ``t_rem``.
    """
    c = -1.0 / (params.q * (1.0 - params.p_survive))
    if params.nonlinear:
        gamma = make_branch_table([("N", c, 1.0), ("Gamma2/N", c, 1.0)])
    else:
        gamma = make_branch_table([("N", c, 1.0)])
    return {N: make_branch_table([("Gamma", c, 1.0)]), GAMMA: gamma}


class _Builder:
    __slots__ = ("params", "s", "max_depth", "max_order", "tables")

    def __init__(self, params, s, max_depth, max_order):
        self.params = params
        self.s = s
        self.max_depth = max_depth
        self.max_order = max_order
        self.tables = interrupt_tables(params)

    def line(self, species: str, r: float, t_rem: float, depth: int) -> PathNode:
        # depth = number of DTheta labels above this line = jet order it needs
        prm, s = self.params, self.s
        diff = prm.D if species == N else prm.nu
        if self.max_depth is not None and depth >= self.max_depth:
            # depth-limited mode: the line runs to time zero unconditionally
            r0 = sample_gaussian_step(s, r, diff, t_rem)
            return PathNode(species, r0, 0.0, "Leaf", 1.0, [], 1.0, 1.0)
        p = prm.p_survive
        control = prm.scheme == "control"
        outcome = sample_interrupt_uniform(s, p, t_rem)
        if not isinstance(outcome, BranchAt):
            r0 = sample_gaussian_step(s, r, diff, t_rem)
            if control:
                return PathNode(species, r0, 0.0, "Leaf", 1.0, [], 1.0, 1.0)
            return PathNode(species, r0, 0.0, "Leaf", 1.0 / p, [], p, 1.0)
        tau = outcome.time
        r1 = sample_gaussian_step(s, r, diff, tau)
        horizon = t_rem - tau
        if self.max_order is not None and depth + 1 > self.max_order:
            raise _TooDeep
        density = (1.0 - p) / t_rem
        table = self.tables[species]
        entry = table.sample(s) if len(table) > 1 else table.entries[0]
        prob = density * entry.probability
        raw = -1.0 / prm.q
        if entry.tag == "Gamma2/N":
            g = self.line(GAMMA, r1, horizon, depth + 1)
            n = self.line(N, r1, horizon, depth + 1)
            sq = PathNode(GAMMA, r1, horizon, "Square", 1.0, [g])
            rec = PathNode(N, r1, horizon, "Reciprocal", 1.0, [n])
            child = PathNode(GAMMA, r1, horizon, "Product", 1.0, [sq, rec])
        else:
            child = self.line(entry.tag, r1, horizon, depth + 1)
        vertex = PathNode(species, r1, horizon, "DTheta", entry.multiplier * t_rem, [child], prob, raw)
        if not control:
            return vertex
        # the line also reaches time zero, continuing its Brownian path
        r0 = sample_gaussian_step(s, r1, diff, horizon)
        leaf = PathNode(species, r0, 0.0, "Leaf", 1.0, [], 1.0, 1.0)
        return PathNode(species, r, t_rem, "Sum", 1.0, [leaf, vertex])


def build_soledge_tree(params: SoledgeParams, species: str, point, t: float, s: RngStream,
                       max_depth: Optional[int] = None, max_order: Optional[int] = None) -> PathNode:
    """Sample one backward tree for ``species`` started at ``point=(r, theta)``.

    ``max_depth`` limits the number of interrupts along any line (1 gives the
    first Picard iterate in expectation).  With ``max_order`` set, building
    stops with :class:`OrderGuard` as soon as the tree needs theta
    derivatives of higher order.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if species not in (N, GAMMA):
        raise ValueError(f"species must be 'N' or 'Gamma', got {species!r}")
    b = _Builder(params, s, max_depth, max_order)
    try:
        return b.line(species, float(point[0]), float(t), 0)
    except _TooDeep:
        raise OrderGuard(f"tree needs theta derivatives beyond order {max_order}") from None


def required_order(node: PathNode) -> int:
    """Largest number of DTheta labels on a root-to-leaf chain."""
    below = max((required_order(c) for c in node.children), default=0)
    return below + (node.label == "DTheta")


class _LeafJets:
    """Leaf jets with a cache for r-independent data."""

    __slots__ = ("exprs", "theta", "cache", "r_free")

    def __init__(self, init_N: Expr, init_Gamma: Expr, theta: float):
        self.exprs = {N: init_N, GAMMA: init_Gamma}
        self.theta = theta
        self.cache = {}
        self.r_free = {k: "r" not in variables(e) for k, e in self.exprs.items()}

    def get(self, species: str, r: float, order: int) -> Jet:
        if self.r_free[species]:
            key = (species, order)
            j = self.cache.get(key)
            if j is None:
                j = eval_jet(self.exprs[species], {"r": 0.0, "theta": self.theta}, order)
                self.cache[key] = j
            return j
        return eval_jet(self.exprs[species], {"r": r, "theta": self.theta}, order)


def _eval(node: PathNode, k: int, leaves: _LeafJets, local: bool) -> Jet:
    # k = number of DTheta labels above this node = jet order needed here
    lab = node.label
    ch = node.children
    if lab == "Leaf":
        j = leaves.get(node.species, node.r, k)
    elif lab == "DTheta":
        j = _eval(ch[0], k + 1, leaves, local).d(0)
    elif lab == "Sum":
        j = _eval(ch[0], k, leaves, local) + _eval(ch[1], k, leaves, local)
    elif lab == "Product":
        j = _eval(ch[0], k, leaves, local) * _eval(ch[1], k, leaves, local)
    elif lab == "Square":
        c = _eval(ch[0], k, leaves, local)
        j = c * c
    elif lab == "Reciprocal":
        j = _eval(ch[0], k, leaves, local).reciprocal()
    elif lab == "SpeciesSwitch":
        j = _eval(ch[0], k, leaves, local)
    else:
        raise ValueError(f"unknown label {lab!r}")
    if local and node.weight != 1.0:
        j = j * node.weight
    return j


def evaluate_soledge_tree(tree: PathNode, init_N, init_Gamma, theta: float,
                          max_jet_order: int = 8, scheme: str = "literal",
                          _leaves: Optional[_LeafJets] = None):
    """Path value of ``tree`` at poloidal angle ``theta``, or :class:`Rejected`.

    ``scheme="literal"``: labels act on the unweighted leaf values and the
    combined value is multiplied by the total tree weight.  ``"control"``:
    every vertex weight multiplies its own subtree (needed once Sum nodes
    appear).
    """
    if _leaves is None:
        _leaves = _LeafJets(_as_expr(init_N), _as_expr(init_Gamma), theta)
    if required_order(tree) > max_jet_order:
        return Rejected("jet-order")
    local = scheme == "control"
    try:
        v = _eval(tree, 0, _leaves, local).c[0]
    except DivisionGuard:
        return Rejected("division")
    except DomainGuard:
        return Rejected("domain")
    return v if local else v * tree.total_weight()


class _Fused:
    """Sample and evaluate in one pass, without materializing the tree.

    Consumes draws in exactly the order of :class:`_Builder`, so for a given
    stream the value equals ``evaluate_soledge_tree(build_soledge_tree(...))``.
    Returns ``(jet, weight)``; with the literal scheme the weight is kept apart
    from the jet, with the control scheme it is already folded in.
    """

    __slots__ = ("params", "s", "max_depth", "max_order", "tables", "leaves", "control", "p")

    def __init__(self, params, s, max_depth, max_order, leaves):
        self.params = params
        self.s = s
        self.max_depth = max_depth
        self.max_order = max_order
        self.tables = interrupt_tables(params)
        self.leaves = leaves
        self.control = params.scheme == "control"
        self.p = params.p_survive

    def line(self, species, r, t_rem, depth):
        prm, s = self.params, self.s
        diff = prm.D if species == N else prm.nu
        if self.max_depth is not None and depth >= self.max_depth:
            r0 = sample_gaussian_step(s, r, diff, t_rem)
            return self.leaves.get(species, r0, depth), 1.0
        p = self.p
        outcome = sample_interrupt_uniform(s, p, t_rem)
        if not isinstance(outcome, BranchAt):
            r0 = sample_gaussian_step(s, r, diff, t_rem)
            return self.leaves.get(species, r0, depth), (1.0 if self.control else 1.0 / p)
        tau = outcome.time
        r1 = sample_gaussian_step(s, r, diff, tau)
        horizon = t_rem - tau
        if self.max_order is not None and depth + 1 > self.max_order:
            raise _TooDeep
        table = self.tables[species]
        entry = table.sample(s) if len(table) > 1 else table.entries[0]
        m = entry.multiplier * t_rem
        if entry.tag == "Gamma2/N":
            gj, gw = self.line(GAMMA, r1, horizon, depth + 1)
            nj, nw = self.line(N, r1, horizon, depth + 1)
            inner = (gj * gj) * nj.reciprocal()
            w = m * gw * nw
        else:
            inner, w = self.line(entry.tag, r1, horizon, depth + 1)
            w = m * w
        jet = inner.d(0)
        if not self.control:
            return jet, w
        r0 = sample_gaussian_step(s, r1, diff, horizon)
        return jet * w + self.leaves.get(species, r0, depth), 1.0


def sample_soledge_value(params: SoledgeParams, species: str, point, t: float, s: RngStream,
                         init_N, init_Gamma, max_jet_order: int = 8,
                         max_depth: Optional[int] = None, _leaves=None):
    """One path value, sampled and evaluated in a single pass (or Rejected)."""
    if _leaves is None:
        _leaves = _LeafJets(_as_expr(init_N), _as_expr(init_Gamma), float(point[1]))
    f = _Fused(params, s, max_depth, max_jet_order, _leaves)
    try:
        jet, w = f.line(species, float(point[0]), float(t), 0)
    except _TooDeep:
        return Rejected("jet-order")
    except DivisionGuard:
        return Rejected("division")
    except DomainGuard:
        return Rejected("domain")
    return jet.c[0] * w


def tree_audit(tree: PathNode) -> tuple:
    """(prod of prob*weight, prod of raw coefficients) over the tree's vertices."""
    lhs, rhs = 1.0, 1.0
    stack = [tree]
    while stack:
        n = stack.pop()
        lhs *= n.prob * n.weight
        rhs *= n.raw
        stack.extend(n.children)
    return lhs, rhs


# ---- estimation ---------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceOk:
    value: float


@dataclass(frozen=True)
class ConvergenceViolated:
    value: float


def convergence_guard(params: SoledgeParams, bound_M: float, t: float):
    """Worst-case almost-sure convergence condition ``t*M/q < 1``."""
    v = t * bound_M / params.q
    return ConvergenceOk(v) if v < 1.0 else ConvergenceViolated(v)


def derive_seed(seed: int, *tags) -> int:
    """Independent 64-bit sub-seed for a (seed, tags...) combination."""
    h = hashlib.blake2b(repr((int(seed),) + tags).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class _SoledgePath:
    """Picklable path function for :func:`run_paths`."""

    def __init__(self, params, species, point, t, init_N, init_Gamma, max_jet_order, max_depth):
        self.params = params
        self.species = species
        self.point = (float(point[0]), float(point[1]))
        self.t = float(t)
        self.init = (init_N, init_Gamma)
        self.max_jet_order = max_jet_order
        self.max_depth = max_depth
        self._leaves = None

    def __getstate__(self):
        d = dict(self.__dict__)
        d["_leaves"] = None
        return d

    def __call__(self, s: RngStream):
        if self._leaves is None:
            self._leaves = _LeafJets(self.init[0], self.init[1], self.point[1])
        return sample_soledge_value(self.params, self.species, self.point, self.t, s, None, None,
                                    self.max_jet_order, self.max_depth, self._leaves)


def estimate_soledge(params: SoledgeParams, init_N, init_Gamma, point, t: float, n_samples: int,
                     seed: int, max_jet_order: int = 8, workers: Optional[int] = None,
                     bound_M: Optional[float] = None, max_depth: Optional[int] = None,
                     species=(N, GAMMA)):
    """Estimates of N and Gamma at ``point=(r, theta)`` and time ``t``.

    Returns ``(Estimate_N, Estimate_Gamma)`` (or only the requested species
    when ``species`` is a single name).  Each species uses its own streams,
    derived from ``seed``.
    """
    init_N, init_Gamma = _as_expr(init_N), _as_expr(init_Gamma)
    flags = []
    if bound_M is not None:
        g = convergence_guard(params, bound_M, t)
        if isinstance(g, ConvergenceViolated):
            warnings.warn(f"convergence bound violated: t*M/q = {g.value:.4g} >= 1", RuntimeWarning)
            flags.append(f"bound-violated:{g.value:.6g}")
        else:
            flags.append("bound-ok")
    single = isinstance(species, str)
    names = (species,) if single else tuple(species)
    out = []
    for name in names:
        fn = _SoledgePath(params, name, point, t, init_N, init_Gamma, max_jet_order, max_depth)
        out.append(run_paths(fn, n_samples, derive_seed(seed, "soledge", name), workers, flags=flags,
                              prefetch=128))
    return out[0] if single else tuple(out)
