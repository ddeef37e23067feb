import math

import numpy as np
import pytest

from solbranch.oracles import (
    Grid2,
    picard_iterate_quadrature,
    soledge_characteristics_exact,
    soledge_fd_point,
    soledge_fd_solve,
    soledge_picard,
)
from solbranch.soledge import SoledgeParams

LIN = SoledgeParams(q=1.0, D=0.1, nu=0.1, nonlinear=False)


def test_characteristics_at_zero():
    n, g = soledge_characteristics_exact(LIN, 2, "exp(-r^2)", (0.5, 0.3), 0.0)
    assert n == pytest.approx(math.cos(0.6) * math.exp(-0.25))
    assert g == 0.0


def test_characteristics_closed_form():
    n, g = soledge_characteristics_exact(LIN, 1, "1", (0.7, 0.4), math.pi / 2)
    assert n == pytest.approx(0.0, abs=1e-15)
    assert g == pytest.approx(math.sin(0.4))


def test_characteristics_residual():
    # g = 1 + r^2 keeps the heat flow closed-form: H_t g = 1 + r^2 + 2 D t
    p = SoledgeParams(q=1.5, D=0.2, nu=0.2, nonlinear=False)

    def sol(r, th, t):
        return soledge_characteristics_exact(p, 1, "1 + r^2", (r, th), t)

    r, th, t, h = 0.6, 0.9, 0.3, 1e-3

    def d1(f, x):
        return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)

    def d2(f, x):
        return (-f(x + 2 * h) + 16 * f(x + h) - 30 * f(x) + 16 * f(x - h) - f(x - 2 * h)) / (12 * h * h)

    for i, j in ((0, 1), (1, 0)):
        dt = d1(lambda s: sol(r, th, s)[i], t)
        drr = d2(lambda s: sol(s, th, t)[i], r)
        dth = d1(lambda s: sol(r, s, t)[j], th)
        assert abs(dt - (p.D * drr - dth / p.q)) <= 1e-8


def test_characteristics_needs_equal_diffusion():
    with pytest.raises(ValueError):
        soledge_characteristics_exact(SoledgeParams(D=0.1, nu=0.2), 1, "1", (0, 0), 0.1)


def test_fd_relaxation_closed_form():
    p = SoledgeParams(Gamma0=1.0, eta=0.5)
    fd = soledge_fd_solve(p, "1", "0", Grid2(16, 5, -1.0, 1.0), 0.4, chi=1)
    assert np.max(np.abs(fd.Gamma - (1 - math.exp(-0.4 / 0.5)))) <= 1e-6


def _fd_error(n):
    init = ("exp(-r^2)*cos(theta)", "0")
    fd = soledge_fd_solve(LIN, *init, Grid2(n, n, -3.0, 3.5), 0.2)
    errs = []
    for pt in ((0.3, 0.5), (-0.4, 2.0), (0.8, 4.0)):
        exact = soledge_characteristics_exact(LIN, 1, "exp(-r^2)", pt, 0.2)
        errs.append(max(abs(a - b) for a, b in zip(fd.at(*pt), exact)))
    return max(errs)


def test_fd_against_characteristics():
    e64, e128 = _fd_error(64), _fd_error(128)
    assert e128 <= 1e-4
    assert e64 / e128 >= 3.5


def test_fd_point_tolerance_covers_exact():
    oN, oG = soledge_fd_point(LIN, "cos(theta)", "0", (0.5, 0.3), 0.2)
    xN, xG = soledge_characteristics_exact(LIN, 1, "1", (0.5, 0.3), 0.2)
    assert abs(oN.value - xN) <= oN.tolerance + 1e-8
    assert abs(oG.value - xG) <= oG.tolerance + 1e-8


def test_picard_first_iterate_closed_form():
    p = SoledgeParams(q=2.0)
    t, theta = 0.3, 0.8
    n1, _ = soledge_picard(p, "1", "sin(theta)", (0.4, theta), t, depth=1)
    assert n1.value == pytest.approx(1 - (t / p.q) * math.cos(theta), rel=1e-10)


def test_picard_depth_two_correction_is_second_order():
    p = SoledgeParams(q=2.0, D=0.1, nu=0.1)
    init = ("2 + 0.2*cos(theta)", "0.2*sin(theta)")
    pt = (0.3, 0.7)

    def gap(t):
        one = picard_iterate_quadrature("soledge", 1, init, pt, t, p)
        two = picard_iterate_quadrature("soledge", 2, init, pt, t, p)
        return abs(two[0].value - one[0].value)

    assert 3.5 <= gap(0.2) / gap(0.1) <= 4.5


def test_unknown_system():
    with pytest.raises(ValueError):
        picard_iterate_quadrature("navier", 1, ("0", "0"), (0, 0), 0.1, None)
    with pytest.raises(ValueError):
        picard_iterate_quadrature("soledge", 3, ("0", "0"), (0, 0), 0.1, SoledgeParams())


def test_tokam_oracle_rejects_non_radial_vorticity():
    from solbranch.tokam import TokamParams

    with pytest.raises(ValueError):
        picard_iterate_quadrature("tokam-config", 1, ("1", "0.1*x1*exp(-(x1^2+x2^2))"), (0.7, 0.4), 0.1,
                                  TokamParams(sigma=1.0))
