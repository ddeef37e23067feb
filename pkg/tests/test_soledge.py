import math

import numpy as np
import pytest

from solbranch import soledge
from solbranch.expr import BinOp, Num, diff, eval_scalar, parse
from solbranch.jets import OrderGuard
from solbranch.oracles import soledge_characteristics_exact, soledge_fd_point
from solbranch.rng import RngStream
from solbranch.soledge import (
    ConvergenceOk,
    ConvergenceViolated,
    PathNode,
    SoledgeParams,
    build_soledge_tree,
    convergence_guard,
    estimate_soledge,
    evaluate_soledge_tree,
    interrupt_tables,
    required_order,
    sample_soledge_value,
    solve_chi1,
    tree_audit,
)

LITERAL = SoledgeParams(q=2.0, D=0.1, nu=0.1, scheme="literal")
CONTROL = SoledgeParams(q=2.0, D=0.1, nu=0.1)
INIT = ("2 + 0.2*cos(theta)", "0.2*sin(theta)")


def first_tree(params, species, pred, t=0.3, point=(0.4, 1.1)):
    for i in range(5000):
        tree = build_soledge_tree(params, species, point, t, RngStream(5, i))
        if pred(tree):
            return tree
    raise AssertionError("no tree of the requested shape")


# ---- chi = 1 ---------------------------------------------------------------

def test_chi1_gamma_relaxation():
    p = SoledgeParams(Gamma0=1.0, eta=0.7)
    for t in (0.1, 0.5, 2.0):
        _, g = solve_chi1(p, "1", "0", (0.3, 1.0), t)
        assert g == pytest.approx(1 - math.exp(-t / 0.7), abs=1e-12)


def test_chi1_identity_at_zero():
    assert solve_chi1(CONTROL, "2 + r*cos(theta)", "sin(theta)", (0.5, 0.4), 0.0) == pytest.approx(
        (2 + 0.5 * math.cos(0.4), math.sin(0.4)))


def test_chi1_against_fd():
    p = SoledgeParams(q=1.0, eta=1.0, D=0.1, nu=0.1)
    pt = (0.5, 0.8)
    n, g = solve_chi1(p, "cos(theta)", "0", pt, 0.3)
    oN, oG = soledge_fd_point(p, "cos(theta)", "0", pt, 0.3, chi=1)
    assert abs(n - oN.value) <= 1e-4 * abs(oN.value)
    assert abs(g - oG.value) <= 1e-4 * max(abs(oG.value), 1e-3)


# ---- trees -----------------------------------------------------------------

def test_tables_reproduce_coefficient():
    for prm in (CONTROL, SoledgeParams(p_survive=0.3, q=0.5)):
        for table in interrupt_tables(prm).values():
            for e in table:
                assert e.probability * e.multiplier == pytest.approx(-1 / (prm.q * (1 - prm.p_survive)))


def test_near_certain_survival_is_single_leaf():
    p = SoledgeParams(D=0.1, p_survive=1 - 1e-12, scheme="literal")
    r0 = []
    for i in range(10_000):
        tree = build_soledge_tree(p, "N", (1.0, 0.0), 0.5, RngStream(3, i))
        assert tree.label == "Leaf" and tree.time_remaining == 0.0
        r0.append(tree.r)
    r0 = np.array(r0)
    assert abs(r0.mean() - 1.0) < 4 * math.sqrt(0.1 / 10_000)
    assert r0.var() == pytest.approx(2 * 0.1 * 0.5, rel=0.05)


def test_mean_tree_size_two_type_branching():
    # lines per tree from a Gamma root; p = 1/2 gives offspring matrix
    # (1-p)[[0, 1], [1, 1/2]] (N, Gamma) and mean total (I - M)^{-1} 1 = 3
    M = 0.5 * np.array([[0.0, 1.0], [1.0, 0.5]])
    expected = np.linalg.solve(np.eye(2) - M, np.ones(2))[1]
    lines = []
    for i in range(10_000):
        tree = build_soledge_tree(LITERAL, "Gamma", (0.0, 0.0), 0.2, RngStream(8, i))
        # every line ends at a leaf or at an interrupt vertex
        lines.append(tree.count("Leaf") + tree.count("DTheta"))
    lines = np.array(lines)
    assert abs(lines.mean() - expected) <= 3 * lines.std() / math.sqrt(lines.size)
    assert lines.mean() < 1 / (1 - 0.5 * 1.5)


def test_single_leaf_value():
    tree = first_tree(LITERAL, "N", lambda t: t.label == "Leaf")
    theta = 1.1
    v = evaluate_soledge_tree(tree, "cos(theta)", "0", theta, scheme="literal")
    assert v == pytest.approx(math.cos(theta) / LITERAL.p_survive)


def test_one_interrupt_value():
    tree = first_tree(LITERAL, "N", lambda t: t.label == "DTheta" and t.children[0].label == "Leaf")
    p, q, t = LITERAL.p_survive, LITERAL.q, tree.time_remaining + 0.0
    theta = 1.1
    v = evaluate_soledge_tree(tree, "0", "sin(theta)", theta, scheme="literal")
    assert v == pytest.approx(-(0.3 / (q * (1 - p))) / p * math.cos(theta), rel=1e-12)


def _fig1_tree(t, tau1, tau2, p, q):
    """N-path: d^2 { (d{Gamma^2/N})^2 (d Gamma)^{-1} } with the labels of the sample-path figure."""
    c = 1.0 / (q * (1 - p))

    def leaf(sp):
        return PathNode(sp, 0.0, 0.0, "Leaf", 1.0 / p)

    inner = PathNode("Gamma", 0.0, tau2, "Product", 1.0, [
        PathNode("Gamma", 0.0, tau2, "Square", 1.0, [leaf("Gamma")]),
        PathNode("N", 0.0, tau2, "Reciprocal", 1.0, [leaf("N")]),
    ])
    d_inner = PathNode("Gamma", 0.0, tau2, "DTheta", -2 * tau2 * c, [inner])
    d_gamma = PathNode("Gamma", 0.0, tau2, "DTheta", -tau2 * c, [leaf("Gamma")])
    body = PathNode("N", 0.0, tau1, "Product", 1.0, [
        PathNode("Gamma", 0.0, tau1, "Square", 1.0, [d_inner]),
        PathNode("Gamma", 0.0, tau1, "Reciprocal", 1.0, [d_gamma]),
    ])
    return PathNode("N", 0.0, t, "DTheta", -t * c, [PathNode("Gamma", 0.0, tau1, "DTheta", -2 * tau1 * c, [body])])


def test_fig1_weight_and_value():
    t, tau1, tau2, p, q, theta = 0.3, 0.2, 0.07, 0.4, 2.0, 0.6
    tree = _fig1_tree(t, tau1, tau2, p, q)
    weight = (1 / p) ** 3 * 4 * t * tau1 * tau2**2 / (q**4 * (1 - p) ** 4)
    assert tree.total_weight() == pytest.approx(weight, rel=1e-14)
    assert required_order(tree) == 3

    # independent value: symbolic chain rule on the two fixed expressions
    th = ["theta"]
    gam, n = parse("sin(theta)", th), parse("2 + cos(theta)", th)
    a = BinOp("/", BinOp("^", gam, Num(2.0)), n)
    f = BinOp("*", BinOp("^", diff(a, "theta"), Num(2.0)), BinOp("/", Num(1.0), diff(gam, "theta")))
    ref = eval_scalar(diff(diff(f, "theta"), "theta"), {"theta": theta})
    v = evaluate_soledge_tree(tree, "2 + cos(theta)", "sin(theta)", theta, scheme="literal")
    assert v == pytest.approx(ref * weight, rel=1e-10)


def test_order_cap():
    tree = first_tree(CONTROL, "Gamma", lambda t: required_order(t) >= 3, t=1.5)
    assert isinstance(evaluate_soledge_tree(tree, *INIT, 0.3, max_jet_order=2, scheme="control"),
                      soledge.Rejected)
    with pytest.raises(OrderGuard):
        for i in range(5000):
            build_soledge_tree(CONTROL, "Gamma", (0.0, 0.0), 1.5, RngStream(5, i), max_order=1)


def test_fused_matches_two_pass():
    for prm in (CONTROL, LITERAL):
        for i in range(300):
            tree = build_soledge_tree(prm, "Gamma", (0.4, 1.1), 0.3, RngStream(21, i))
            a = evaluate_soledge_tree(tree, *INIT, 1.1, max_jet_order=12, scheme=prm.scheme)
            b = sample_soledge_value(prm, "Gamma", (0.4, 1.1), 0.3, RngStream(21, i), *INIT, max_jet_order=12)
            if isinstance(a, soledge.Rejected):
                assert isinstance(b, soledge.Rejected)
            else:
                assert a == pytest.approx(b, rel=1e-12, abs=1e-14)


def test_audit_holds():
    for i in range(500):
        tree = build_soledge_tree(CONTROL, "N" if i % 2 else "Gamma", (0.3, 0.7), 0.4, RngStream(2, i))
        lhs, rhs = tree_audit(tree)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_sign_mutation_breaks_audit(monkeypatch):
    from solbranch.tables import make_branch_table
    from solbranch.verify import criterion_11

    honest = soledge.interrupt_tables

    def flipped(params):
        return {k: make_branch_table([(e.tag, -e.coefficient, e.probability) for e in tab])
                for k, tab in honest(params).items()}

    monkeypatch.setattr(soledge, "interrupt_tables", flipped)
    res = criterion_11("fast")
    assert not res.passed
    assert res.measured["mismatches"]["soledge"] > 0


# ---- estimation ---------------------------------------------------------

def test_zero_data():
    eN, eG = estimate_soledge(CONTROL, "0", "0", (0.3, 0.2), 0.3, 2000, seed=1)
    assert (eN.mean, eN.standard_error, eG.mean, eG.standard_error) == (0, 0, 0, 0)


def test_linear_characteristics():
    p = SoledgeParams(q=1.0, D=0.1, nu=0.1, nonlinear=False)
    pt = (0.7, 0.9)
    eN, eG = estimate_soledge(p, "cos(theta)", "0", pt, 0.2, 20_000, seed=4)
    xN, xG = soledge_characteristics_exact(p, 1, "1", pt, 0.2)
    assert abs(eN.mean - xN) <= 3 * eN.standard_error
    assert abs(eG.mean - xG) <= 3 * eG.standard_error


def test_stderr_scaling():
    p = SoledgeParams(q=2.0, D=0.1, nu=0.1)
    se = [estimate_soledge(p, *INIT, (0.3, 0.7), 0.2, n, seed=6, species="N").standard_error
          for n in (1000, 10_000, 100_000)]
    for a, b in zip(se, se[1:]):
        assert a / b == pytest.approx(math.sqrt(10), rel=0.2)


@pytest.mark.parametrize("t,q,M,ok,value", [(1, 2, 1, True, 0.5), (1, 1, 1, False, 1.0), (3, 1, 0.5, False, 1.5)])
def test_convergence_guard(t, q, M, ok, value):
    g = convergence_guard(SoledgeParams(q=q), M, t)
    assert isinstance(g, ConvergenceOk if ok else ConvergenceViolated)
    assert g.value == pytest.approx(value)


def test_bound_flag_and_warning():
    with pytest.warns(RuntimeWarning):
        e = estimate_soledge(CONTROL, "0", "0", (0, 0), 3.0, 10, 0, bound_M=1.0, species="N")
    assert e.flags == ("bound-violated:1.5",)


def test_param_validation():
    with pytest.raises(ValueError):
        SoledgeParams(p_survive=1.0)
    with pytest.raises(ValueError):
        SoledgeParams(q=0.0)
    with pytest.raises(ValueError):
        SoledgeParams(scheme="other")
