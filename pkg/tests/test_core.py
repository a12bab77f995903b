import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pdlab.core import (MutationRate, OrderedFrequencies, SimplexPointM, as_frequencies,
                        check_theta, classify_ladder, classify_ladder_array, equal_weights,
                        metric_d, project_m, sort_truncate, speed)


def test_sort_truncate_with_residual_in():
    p = sort_truncate([0.2, 0.5, 0.1], 0.05, residual=0.2)
    assert p.freqs == (0.5, 0.2, 0.1)
    assert p.residual == pytest.approx(0.2)


def test_sort_truncate_single_atom():
    p = sort_truncate([1.0], 1e-10)
    assert p.freqs == (1.0,) and p.residual == 0


def test_sort_truncate_moves_small_atoms():
    p = sort_truncate([0.6, 0.3, 0.02], 0.05)
    assert p.freqs == (0.6, 0.3)
    assert p.residual == pytest.approx(0.1)


def test_sort_truncate_rejects_excess_mass():
    with pytest.raises(ValueError):
        sort_truncate([0.7, 0.6], 0.0)
    with pytest.raises(ValueError):
        sort_truncate([0.5, -0.1], 0.0)


def test_metric_values():
    one = OrderedFrequencies((1.0,))
    zero = OrderedFrequencies((), 0.0)
    half = OrderedFrequencies((0.5, 0.5))
    assert metric_d(one, one) == 0
    assert metric_d(one, zero) == 0.5
    assert metric_d(one, half) == pytest.approx(0.375)


@pytest.mark.parametrize("freqs,n", [((1.0,), 1), ((0.5, 0.5), 2), ((0.5, 0.25), None),
                                     ((1 / 3,) * 3, 3)])
def test_classify_ladder(freqs, n):
    assert classify_ladder(OrderedFrequencies(freqs), 1e-9).n == n


def test_classify_ladder_none_string():
    assert str(classify_ladder(OrderedFrequencies((0.5, 0.25)), 1e-9)) == "none"


def test_classify_ladder_tolerance_window():
    p = OrderedFrequencies((0.5, 0.495, 0.004), 0.001)
    assert classify_ladder(p, 0.01).n == 2
    assert classify_ladder(p, 1e-4).is_none


@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.sampled_from([1e-3, 1e-2, 0.1]))
def test_classify_array_agrees_with_scalar(vals, tol):
    v = np.array(vals)
    if v.sum() > 0:
        v = v / v.sum()
    p = as_frequencies(list(v))
    row = np.zeros(10)
    row[:len(p)] = p.freqs
    got = classify_ladder_array(row[None, :], tol)[0]
    n = classify_ladder(p, tol).n
    assert got == (0 if n is None else n)


def test_ordered_frequencies_validation():
    with pytest.raises(ValueError):
        OrderedFrequencies((0.3, 0.5))
    with pytest.raises(ValueError):
        OrderedFrequencies((0.5, 0.0))
    with pytest.raises(ValueError):
        OrderedFrequencies((0.6, 0.3), 0.2)


def test_text_round_trip():
    p = OrderedFrequencies((0.5, 0.3, 0.1), 0.1)
    assert OrderedFrequencies.from_text(p.to_text()) == p


def test_implied_zeros_and_projection():
    p = OrderedFrequencies((0.6, 0.4))
    assert p[5] == 0.0
    assert project_m(p, 3).coords == (0.6, 0.4, 0.0)
    assert np.array_equal(p.top(3), [0.6, 0.4, 0.0])


def test_simplex_point_interior():
    assert SimplexPointM((0.5, 0.3)).is_interior()
    assert not SimplexPointM((0.5, 0.5)).is_interior()
    assert not SimplexPointM((0.4, 0.4)).is_interior()
    with pytest.raises(ValueError):
        SimplexPointM((0.3, 0.5))


def test_equal_weights():
    assert equal_weights(4).coords == (0.25,) * 4


def test_speed_and_theta_checks():
    assert speed(math.exp(-2)) == pytest.approx(0.5)
    assert MutationRate(0.1).speed == pytest.approx(1 / math.log(10))
    for bad in (0, -1, math.inf, math.nan):
        with pytest.raises(ValueError):
            check_theta(bad)
    with pytest.raises(ValueError):
        speed(1.0)
    assert check_theta(2.0) == 2.0


@given(st.lists(st.floats(0, 0.2), max_size=5), st.sampled_from([0.0, 1e-3, 0.05]))
def test_sort_truncate_idempotent(vals, eps):
    once = sort_truncate(vals, eps)
    again = sort_truncate(once.freqs, eps, residual=once.residual)
    assert again.freqs == once.freqs
    assert again.residual == pytest.approx(once.residual, abs=1e-15)
