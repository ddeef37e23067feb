import math

import pytest

from solbranch.kernels import KernelSampler
from solbranch.rng import RngStream
from solbranch.tokam import (
    TokamParams,
    build_tokam_tables,
    build_tokam_tree,
    estimate_tokam,
    evaluate_tokam_tree,
    series_coefficient,
    tokam_bound_check,
    tokam_tree_audit,
    unit_tables,
)


def test_n_table_uniform():
    tn, _, _ = unit_tables(TokamParams(sigma=1.0, Lambda=0.0))
    assert tn.probabilities == pytest.approx([0.25] * 4)


def test_omega_g_branch():
    _, to, _ = unit_tables(TokamParams(sigma=1.0, Lambda=0.0, g=1.0))
    assert to["g"].probability == pytest.approx(1 / 6)
    # kill carries zero coefficient at Lambda = 0 but keeps its weight
    assert to["kill"].coefficient == 0.0 and to["kill"].probability == pytest.approx(1 / 6)


def test_denominator_general():
    p = TokamParams(sigma=0.7, Lambda=0.3, g=0.4)
    _, to, _ = unit_tables(p)
    lam = 0.7 * math.exp(0.3)
    assert to["g"].probability == pytest.approx(0.4 / (2 + 0.7 + 2 * lam + 0.4))


@pytest.mark.parametrize("x", [(0.05, 0.0), (0.7, 0.4), (-2.0, 1.5)])
def test_tables_reproduce_coefficients(x):
    for table in build_tokam_tables(TokamParams(sigma=1.3, Lambda=-0.2, g=0.5), "default", x):
        for e in table:
            assert abs(e.probability * e.multiplier - e.coefficient) <= 1e-12 * max(1, abs(e.coefficient))


def test_tables_undefined_where_h_vanishes():
    with pytest.raises(ValueError):
        build_tokam_tables(TokamParams(), "default", (0.0, 0.0))


def test_series_coefficients():
    assert series_coefficient("n", 1, 2.0, 0.5) == pytest.approx(2.0)
    assert series_coefficient("n", 2, 2.0, 0.5) == pytest.approx(-2.0)
    assert series_coefficient("Omega", 2, 2.0, 0.5) == pytest.approx(-4.0)


def test_null_field():
    p = TokamParams(sigma=1.0, Lambda=0.0, g=0.0)
    e = estimate_tokam(p, "0", "0", "Omega", (0.3, 0.2), 0.1, 2000, seed=1)
    assert e.mean == 0.0 and e.standard_error == 0.0
    e = estimate_tokam(p, "0", "0", "n", (0.3, 0.2), 0.1, 2000, seed=1)
    assert e.mean == 0.0


def test_audit_on_sampled_trees():
    p = TokamParams(sigma=1.0, g=0.5)
    sampler = KernelSampler()
    for i in range(300):
        tree = build_tokam_tree(p, "n" if i % 2 else "Omega", (0.7, 0.4), 0.1, RngStream(6, i), sampler)
        lhs, rhs = tokam_tree_audit(tree)
        assert lhs == pytest.approx(rhs, rel=1e-10)


def test_tree_and_fused_paths_agree():
    from solbranch.tokam import _TokamPath, _expr

    p = TokamParams(sigma=1.0, g=0.5)
    sampler = KernelSampler()
    init = ("1 + 0.1*exp(-(x1^2+x2^2))", "0.1*exp(-(x1^2+x2^2))")
    path = _TokamPath(p, "Omega", (0.7, 0.4), 0.1, _expr(init[0]), _expr(init[1]), "default", 8, None)
    for i in range(200):
        tree = build_tokam_tree(p, "Omega", (0.7, 0.4), 0.1, RngStream(7, i), sampler)
        a = evaluate_tokam_tree(tree, *init)
        b = path(RngStream(7, i))
        if hasattr(a, "reason"):
            assert hasattr(b, "reason")
        else:
            assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("M,expected", [(1.5, "ok"), (2.0, "ok"), (2.5, "violated")])
def test_bound_check(M, expected):
    assert tokam_bound_check(TokamParams(sigma=1.0, Lambda=0.0), math.log(2.0), M) == expected


def test_bound_small_t():
    assert tokam_bound_check(TokamParams(), 1e-12, 1e6) == "ok"


def test_params_validation():
    with pytest.raises(ValueError):
        TokamParams(sigma=0.0)
    with pytest.raises(ValueError):
        TokamParams(g=-1.0)
    with pytest.raises(ValueError):
        TokamParams(S="cos(y)")


def test_path_values_bounded_by_worst_multiplier():
    # leaves bounded by 1: a path value cannot exceed the product of its
    # branch multipliers, hence M^{branchings} with M the worst one
    from solbranch.tokam import tree_max_multiplier

    p = TokamParams(sigma=1.0, Lambda=0.2, g=0.5)
    sampler = KernelSampler()
    for i in range(500):
        tree = build_tokam_tree(p, "Omega", (0.7, 0.4), 0.2, RngStream(8, i), sampler)
        v = evaluate_tokam_tree(tree, "1", "0.5")
        if hasattr(v, "reason"):
            continue
        m = max(tree_max_multiplier(tree), 1.0)
        assert abs(v) <= m ** tree.n_branchings() * (1 + 1e-12)
