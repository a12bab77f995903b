import io
import math

import numpy as np
import pytest

from pdlab.core import SimplexPointM
from pdlab.density import (DensityTable, NormalizationError, box2_probability, cdf_p1, check_functional_eq,
                           integral, joint_density, normalization, solve_g1)

# Frozen from tests/oracles.py (mpmath quadrature, 30 digits).
TOP_HALF = {0.1: 0.0072693149932726965, 0.5: 0.11862641298045697,
            1.0: 0.30685281944005469, 2.0: 0.61370563888010938}
SECOND_THIRD = {0.1: 7.9140478271935493e-5, 0.5: 0.0082115387890248597,
                1.0: 0.04860838829113155, 2.0: 0.20993231567422478}
DICKMAN = {2: 0.30685281944005469, 3: 0.048608388291131567, 4: 0.0049109256477608324,
           5: 0.00035472470045603973}


@pytest.fixture(scope="module")
def tables():
    return {th: solve_g1(th) for th in (0.1, 0.5, 1.0, 2.0)}


def test_closed_form_top_interval(tables):
    assert float(tables[1.0].pdf(0.75)) == pytest.approx(4 / 3, rel=1e-14)
    assert float(tables[1.0].pdf(1.0)) == pytest.approx(1.0)


def test_known_value_theta_one(tables):
    t = tables[1.0]
    assert cdf_p1(t, 0.5) == pytest.approx(1 - math.log(2), abs=1e-12)
    assert cdf_p1(t, 1.0) == 1.0


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 2.0])
def test_matches_quadrature_oracle(tables, theta):
    t = tables[theta]
    assert cdf_p1(t, 0.5) == pytest.approx(TOP_HALF[theta], rel=1e-12)
    assert cdf_p1(t, 1 / 3) == pytest.approx(SECOND_THIRD[theta], rel=1e-12)


@pytest.mark.parametrize("u", [2, 3, 4, 5])
def test_dickman_values(tables, u):
    assert cdf_p1(tables[1.0], 1 / u) == pytest.approx(DICKMAN[u], rel=1e-12)


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 2.0])
def test_self_consistency(tables, theta):
    t = tables[theta]
    assert check_functional_eq(t) <= 1e-6
    assert abs(normalization(t) - 1) <= 1e-6


def test_top_interval_residual_is_rounding_only(tables):
    t = tables[0.5]
    p = np.linspace(0.51, 0.999, 200)
    g = t.pdf(p)
    lhs = g * p * (1 - p) ** 0.5
    assert np.max(np.abs(lhs - 0.5)) < 1e-14


def test_coarse_grid_error_is_reported():
    with pytest.raises(NormalizationError, match="refine the grid"):
        solve_g1(0.5, K=4, grid_points_per_interval=8)
    t = solve_g1(0.5, K=4, grid_points_per_interval=8, check=False)
    assert abs(normalization(t) - 1) > 1e-3


@pytest.mark.parametrize("theta", [0.1, 0.5, 2.0])
def test_cdf_monotone(tables, theta):
    t = tables[theta]
    x = np.concatenate([np.linspace(t.floor, 1, 4001), [r for _, r, _, _ in t.grid()]])
    x = np.sort(np.clip(x, t.floor, 1))
    F = t.cdf(x)
    # nodal values agree to rounding where neighbours sit a few ulps apart
    assert np.all(np.diff(F) >= -1e-14 * F[1:])


def test_integral_plus_tail(tables):
    t = tables[0.5]
    assert integral(t) + t.tail_mass == pytest.approx(1.0, abs=1e-12)
    assert 0 < t.tail_mass < 1e-9


def test_dump_load_bit_exact(tables):
    t = tables[0.5]
    buf = io.StringIO()
    t.dump(buf)
    buf.seek(0)
    back = DensityTable.load(buf)
    x = np.linspace(t.floor, 1, 257)
    assert np.array_equal(back.cdf(x), t.cdf(x))


def test_input_validation():
    with pytest.raises(ValueError):
        solve_g1(0.5, K=1)
    with pytest.raises(ValueError):
        solve_g1(-1.0)


def test_joint_density_values(tables):
    t = tables[1.0]
    assert joint_density(1.0, SimplexPointM((0.5, 0.3)), t) == pytest.approx(1 / 0.15)
    assert joint_density(1.0, SimplexPointM((0.4, 0.4)), t) == 0.0
    with pytest.raises(ValueError):
        joint_density(0.5, SimplexPointM((0.5, 0.3)), t)


def test_two_coordinate_normalization(tables):
    t = solve_g1(0.5, K=30, grid_points_per_interval=256)
    mass = box2_probability(t, (t.floor, 1.0), (0.0, 0.5), n_outer=48, n_inner=48)
    assert mass == pytest.approx(1.0, abs=0.01)


def test_box_probability_matches_one_coordinate(tables):
    # P{P_1 in [0.6, 0.9]} splits over P_2 into [0, 0.4]
    t = tables[0.5]
    box = box2_probability(t, (0.6, 0.9), (0.0, 0.4))
    assert box == pytest.approx(cdf_p1(t, 0.9) - cdf_p1(t, 0.6), rel=1e-6)
