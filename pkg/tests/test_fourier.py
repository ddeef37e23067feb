import math

import numpy as np
import pytest

from solbranch.fourier import (
    FourierParams,
    MajorizingKernel,
    build_fourier_tables,
    build_fourier_tree,
    estimate_fourier,
    evaluate_fourier_tree,
    fourier_bound_check,
    fourier_tree_audit,
    gamma_convolution_power,
    sample_conditioned_momenta,
    series_coefficient,
)
from solbranch.oracles import picard_iterate_quadrature
from solbranch.rng import RngStream

KER = MajorizingKernel()
K = (0.8, 0.5)
F0 = ("0.3*exp(-(k1^2+k2^2))", "0")


def test_gamma_single_and_double():
    assert gamma_convolution_power(KER, 1, (0.3, 0.4)) == pytest.approx(math.exp(-0.125) / (2 * math.pi))
    assert gamma_convolution_power(KER, 2, (0.0, 0.0)) == pytest.approx(1 / (4 * math.pi))
    assert KER((0.3, 0.4)) == gamma_convolution_power(KER, 1, (0.3, 0.4))


def test_gamma_fourth_power_grid_convolution():
    # gamma^{*3} convolved with gamma on a grid, evaluated at k = (1, 0.5)
    h = 0.05
    u = np.arange(-9, 9 + h / 2, h)
    X, Y = np.meshgrid(u, u, indexing="ij")
    k = (1.0, 0.5)
    g3 = np.exp(-0.5 * ((k[0] - X) ** 2 + (k[1] - Y) ** 2) / 3) / (2 * math.pi * 3)
    g1 = np.exp(-0.5 * (X ** 2 + Y ** 2)) / (2 * math.pi)
    num = float(np.sum(g3 * g1)) * h * h
    assert num == pytest.approx(gamma_convolution_power(KER, 4, k), rel=1e-6)


def test_amplitude_and_scale():
    ker = MajorizingKernel(s=2.0, c=3.0)
    assert gamma_convolution_power(ker, 2, (0.0, 0.0)) == pytest.approx(9 / (2 * math.pi * 8))


def test_conditioned_momenta():
    s = RngStream(1, 0)
    assert sample_conditioned_momenta(s, KER, 1, (0.4, 0.1)) == []
    for n in (2, 3, 5):
        xis = sample_conditioned_momenta(s, KER, n, (0.4, 0.1))
        assert len(xis) == n - 1


def test_bridge_marginal_variance():
    x = np.array([sample_conditioned_momenta(RngStream(2, i), KER, 2, (0.0, 0.0))[0] for i in range(100_000)])
    assert x.var(axis=0) == pytest.approx([0.5, 0.5], rel=0.02)


def test_tree_momenta_conserved():
    p = FourierParams(sigma=1.0, g=0.5)
    for i in range(300):
        try:
            tree = build_fourier_tree(p, "chi", K, 0.1, RngStream(3, i))
        except ArithmeticError:
            continue
        stack = [tree]
        while stack:
            node = stack.pop()
            if node.label == "Branch" and len(node.children) > 1:
                s1 = sum(c.k[0] for c in node.children)
                s2 = sum(c.k[1] for c in node.children)
                assert abs(s1 - node.k[0]) < 1e-12 and abs(s2 - node.k[1]) < 1e-12
            stack.extend(node.children)


def test_zeta_table_probabilities():
    _, tz = build_fourier_tables(FourierParams(sigma=1.0, g=1.0), (1.0, 0.0))
    z = 1 / (2 * math.pi) + 2
    assert tz.probabilities == pytest.approx([1 / (2 * math.pi) / z, 1 / z, 1 / z])


@pytest.mark.parametrize("k", [(1.0, 0.0), (0.3, -0.7), (2.0, 1.5)])
def test_tables_reproduce_coefficients(k):
    for table in build_fourier_tables(FourierParams(sigma=0.8, Lambda=0.3, g=0.5), k):
        assert sum(table.probabilities) == pytest.approx(1.0, abs=1e-12)
        for e in table:
            assert abs(e.probability * e.multiplier - e.coefficient) <= 1e-12 * max(1, abs(e.coefficient))


def test_k_zero_rejected():
    with pytest.raises(ValueError):
        build_fourier_tables(FourierParams(), (0.0, 0.0))
    with pytest.raises(ValueError):
        estimate_fourier(FourierParams(), F0, F0, "chi", (0, 0), 0.1, 10, 0)


def test_series_zero_term_kills_path():
    p = FourierParams(sigma=1.0)
    assert series_coefficient(p, "chi", 0, (1.0, 0.0)) == 0.0
    for i in range(5000):
        tree = build_fourier_tree(p, "chi", (1.0, 0.0), 2.0, RngStream(4, i))
        if tree.label == "Zero":
            assert evaluate_fourier_tree(tree, p, F0, F0) == 0
            return
    pytest.fail("no n = 0 series draw at the root")


def test_series_first_terms():
    p = FourierParams(D=0.2)
    k = (1.0, 0.0)
    # n = 1: -(-1) gamma/gamma / (D k^2)
    assert series_coefficient(p, "chi", 1, k) == pytest.approx(1 / 0.2)
    assert series_coefficient(p, "zeta", 1, k) == pytest.approx(-1 / 0.1)


def test_audit():
    p = FourierParams(sigma=1.0, g=0.5)
    for i in range(500):
        try:
            tree = build_fourier_tree(p, "zeta" if i % 2 else "chi", K, 0.1, RngStream(5, i))
        except ArithmeticError:
            continue
        lhs, rhs = fourier_tree_audit(tree)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(rhs), 1e-300)


SMALL = ("1e-6*exp(-(k1^2+k2^2))", "0")


def test_pure_decay():
    # sigma = g = 0 leaves only the quadratic a'/c terms, O(amplitude) relative
    p = FourierParams(sigma=0.0, g=0.0, D=0.1)
    t = 0.05
    e = estimate_fourier(p, SMALL, ("0", "0"), "chi", K, t, 20_000, seed=3)
    kk = K[0] ** 2 + K[1] ** 2
    exact = math.exp(-0.1 * kk * t) * 1e-6 * math.exp(-kk) / KER(K)
    assert abs(e.mean - exact) <= 3 * e.stderr_re + 1e-8 * exact


def test_picard_decay_only():
    p = FourierParams(sigma=0.0, g=0.0, D=0.1, nu=0.2)
    t = 0.05
    chi, zeta = picard_iterate_quadrature("tokam-fourier", 1, (SMALL, SMALL), K, t, p)
    kk = K[0] ** 2 + K[1] ** 2
    leaf = 1e-6 * math.exp(-kk) / KER(K)
    assert abs(chi.value - math.exp(-0.1 * kk * t) * leaf) <= chi.tolerance + 1e-8 * leaf
    assert abs(zeta.value - math.exp(-0.2 * kk * t) * leaf) <= zeta.tolerance + 1e-8 * leaf


def test_infrared_rejection_counted():
    p = FourierParams(sigma=1.0, g=0.5, k_min=0.5)
    e = estimate_fourier(p, F0, F0, "chi", (0.6, 0.0), 0.5, 2000, seed=1)
    assert e.n_rejected > 0
    assert e.reject_reasons.get("infrared") == e.n_rejected


@pytest.mark.parametrize("caps,expected", [([0.9, 0.9], "ok"), ([0.9, 1.1], "violated"),
                                           ([1.0, 1.0], "ok"), ({"chi": 0.5}, "ok")])
def test_bound_check(caps, expected):
    assert fourier_bound_check(caps) == expected
