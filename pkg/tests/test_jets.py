import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from solbranch.expr import eval_jet, parse
from solbranch.jets import (
    DivisionGuard,
    DomainGuard,
    Jet,
    Jet1,
    Jet2,
    OrderGuard,
    extract_derivative,
    jet_arith,
    jet_fn,
    set_eps_div,
)


def test_mul_difference_of_squares():
    a, b = Jet1([1, 1, 0]), Jet1([1, -1, 0])
    assert jet_arith("mul", a, b).c == [1, 0, -1]


def test_gamma_squared_over_n():
    g = Jet1([1, 1, 0])
    n = Jet1([2, 0, 0])
    assert jet_arith("div", g * g, n).c == pytest.approx([0.5, 1, 0.5])


def test_division_guard():
    with pytest.raises(DivisionGuard):
        Jet1([1, 1]) / Jet1([1e-18, 1])
    with pytest.raises(DivisionGuard):
        Jet1([1e-18, 1]).reciprocal()


def test_eps_div_is_configurable():
    try:
        set_eps_div(1e-20)
        assert Jet1([1e-18, 0]).reciprocal().c[0] == pytest.approx(1e18)
    finally:
        set_eps_div(1e-9)
    with pytest.raises(DivisionGuard):
        Jet1([1e-18, 0]).reciprocal()


def test_log_and_exp_series():
    assert jet_fn("log", Jet1([1, 1])).c == pytest.approx([0, 1])
    x = Jet.variable(0.0, order=4)
    assert jet_fn("exp", x).c == pytest.approx([1, 1, 1 / 2, 1 / 6, 1 / 24])


def test_log_domain_guard():
    with pytest.raises(DomainGuard):
        Jet1([-1.0, 1.0]).log()
    with pytest.raises(DomainGuard):
        Jet1([0.0, 1.0]).sqrt()


def test_sin_of_square_vs_finite_differences():
    x0, h = 0.3, 1e-2
    j = jet_fn("sin", Jet.variable(x0, order=3) * Jet.variable(x0, order=3))

    def f(x):
        return math.sin(x * x)

    d1 = (f(x0 + h) - f(x0 - h)) / (2 * h)
    d2 = (f(x0 + h) - 2 * f(x0) + f(x0 - h)) / h**2
    d3 = (f(x0 + 2 * h) - 2 * f(x0 + h) + 2 * f(x0 - h) - f(x0 - 2 * h)) / (2 * h**3)
    # central differences are O(h^2); Richardson removes the leading term
    h2 = h / 2
    d1b = (f(x0 + h2) - f(x0 - h2)) / (2 * h2)
    d2b = (f(x0 + h2) - 2 * f(x0) + f(x0 - h2)) / h2**2
    d3b = (f(x0 + 2 * h2) - 2 * f(x0 + h2) + 2 * f(x0 - h2) - f(x0 - 2 * h2)) / (2 * h2**3)
    fd = [(4 * b - a) / 3 for a, b in ((d1, d1b), (d2, d2b), (d3, d3b))]
    for k, ref in enumerate(fd, start=1):
        assert extract_derivative(j, k) == pytest.approx(ref, rel=1e-6)


def test_extract_derivative():
    cosj = Jet1([1, 0, -0.5])
    assert extract_derivative(cosj, 2) == -1
    assert extract_derivative(cosj, 0) == 1
    x1 = Jet.variable(0.0, 0, 2, 2)
    x2 = Jet.variable(0.0, 1, 2, 2)
    assert extract_derivative(x1 * x2, (1, 1)) == 1
    with pytest.raises(OrderGuard):
        extract_derivative(cosj, 3)
    with pytest.raises(OrderGuard):
        _ = cosj[3]


def test_jet2_from_dict():
    j = Jet2({(0, 0): 1.0, (1, 1): 2.0}, order=2)
    assert j[(1, 1)] == 2.0 and j[(2, 0)] == 0.0


def test_derivative_shifts_coefficients():
    # d/de of cos(theta + e) = -sin(theta + e)
    j = eval_jet(parse("cos(theta)", ["theta"]), {"theta": 0.4}, 5)
    d = j.d(0)
    ref = eval_jet(parse("-sin(theta)", ["theta"]), {"theta": 0.4}, 4)
    assert d.c == pytest.approx(ref.c, rel=1e-13, abs=1e-15)


def test_array_coefficients():
    r = np.linspace(0.5, 2.0, 7)
    j = Jet.variable(r, order=3).log()
    assert j.c[1] == pytest.approx(1 / r)
    assert j.c[2] == pytest.approx(-0.5 / r**2)


coef = st.floats(-2.0, 2.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(coef, min_size=5, max_size=5), st.lists(coef, min_size=5, max_size=5),
       st.floats(0.5, 3.0))
def test_round_trips(a, b, lead):
    x = Jet1([lead] + a[1:])
    y = Jet1([lead + 0.25] + b[1:])
    assert ((x * y) / y).c == pytest.approx(x.c, rel=1e-10, abs=1e-10)
    assert (x.log().exp()).c == pytest.approx(x.c, rel=1e-10, abs=1e-10)
    assert ((x / y) * y).c == pytest.approx(x.c, rel=1e-10, abs=1e-10)
    assert (x.sqrt() * x.sqrt()).c == pytest.approx(x.c, rel=1e-10, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(coef, min_size=4, max_size=4), st.integers(0, 5))
def test_powi_matches_repeated_product(a, n):
    x = Jet1([1.0] + a[1:])
    ref = Jet.constant(1.0, 1, 3)
    for _ in range(n):
        ref = ref * x
    assert x.powi(n).c == pytest.approx(ref.c, rel=1e-12, abs=1e-12)


def test_bad_ops():
    with pytest.raises(ValueError):
        jet_arith("pow", Jet1([1, 0]), Jet1([1, 0]))
    with pytest.raises(ValueError):
        jet_arith("add", Jet1([1, 0]), Jet1([1, 0, 0]))
    with pytest.raises(ValueError):
        jet_fn("tan", Jet1([1, 0]))
