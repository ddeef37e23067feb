import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from solbranch.rng import RngStream
from solbranch.tables import make_branch_table, poisson_tail_pmf, sample_poisson_tail


def test_hand_table():
    t = make_branch_table([("a", 2, 1), ("b", -4, 2)])
    assert t.probabilities == pytest.approx([1 / 3, 2 / 3])
    assert t.multipliers == pytest.approx([6, -6])
    assert [e.probability * e.multiplier for e in t] == pytest.approx([2, -4])


entry = st.tuples(st.floats(-1e3, 1e3), st.floats(1e-6, 1e3))


@given(st.lists(entry, min_size=1, max_size=8))
def test_identities(raw):
    t = make_branch_table([(f"e{i}", c, w) for i, (c, w) in enumerate(raw)])
    assert abs(sum(t.probabilities) - 1.0) <= 1e-12
    for e in t:
        assert abs(e.probability * e.multiplier - e.coefficient) <= 1e-12 * max(1.0, abs(e.coefficient))


def test_zero_weight_entries():
    t = make_branch_table([("a", 1.0, 1.0), ("b", 0.0, 0.0)])
    assert len(t) == 1
    with pytest.raises(ValueError):
        make_branch_table([("a", 1.0, 1.0), ("b", 2.0, 0.0)])
    with pytest.raises(ValueError):
        make_branch_table([("a", 1.0, -1.0)])
    with pytest.raises(ValueError):
        make_branch_table([("a", 0.0, 0.0)])


def test_pick_inverse_cdf():
    t = make_branch_table([("a", 1, 1), ("b", 1, 3)])
    assert t.pick(0.2).tag == "a"
    assert t.pick(0.3).tag == "b"
    assert t.pick(0.999999).tag == "b"


def test_poisson_tail_values():
    assert poisson_tail_pmf(1, 1) == pytest.approx(1 / (math.e - 1))
    assert poisson_tail_pmf(1, 1) == pytest.approx(0.58198, abs=1e-5)
    assert poisson_tail_pmf(2, 2) == pytest.approx(0.5 / (math.e - 2))
    assert poisson_tail_pmf(2, 2) == pytest.approx(0.69611, abs=1e-5)
    assert poisson_tail_pmf(0, 1) == 0.0


@pytest.mark.parametrize("min_j", [0, 1, 2])
def test_poisson_tail_normalized(min_j):
    assert abs(sum(poisson_tail_pmf(j, min_j) for j in range(min_j, 40)) - 1.0) <= 1e-12


def test_poisson_zero_tail_mean():
    j = np.array([sample_poisson_tail(RngStream(12, i), 0) for i in range(100_000)])
    assert abs(j.mean() - 1.0) < 0.01
    assert j.min() == 0


def test_poisson_tail_support():
    assert min(sample_poisson_tail(RngStream(12, i), 2) for i in range(2000)) == 2
    with pytest.raises(ValueError):
        sample_poisson_tail(RngStream(0, 0), 3)
