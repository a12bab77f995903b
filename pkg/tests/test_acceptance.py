"""The eleven acceptance checks at their stated tolerances.

Each check records one PASS/FAIL line, printed at the end of the pytest run
(see conftest.py) or directly by ``python3 tests/test_acceptance.py``.
Nothing is loosened: a check that fails here fails for a reason recorded in
the project notes.
"""
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from oracles import min_hr_slsqp
from pdlab import ldplab
from pdlab.ratefn import rate_In, rate_J, rate_S1


def record(num, label, ok, detail):
    ACCEPTANCE[num] = f"[{num:2d}] {'PASS' if ok else 'FAIL'}  {label}: {detail}"
    print(ACCEPTANCE[num])
    return ok


def test_beta_tail_limit():
    t0 = time.perf_counter()
    out = ldplab.experiment_beta_tail([1e-8])
    out12 = ldplab.experiment_beta_tail([1e-12], tol=0.04)
    elapsed = time.perf_counter() - t0
    v8, v12 = out["estimates"][0]["scaled"], out12["estimates"][0]["scaled"]
    ok = out["pass"] and out12["pass"] and elapsed < 1e-3
    assert record(1, "scaled Beta(1, theta) tail", ok,
                  f"{v8:.4f} at 1e-8 (tol 0.05), {v12:.4f} at 1e-12 (tol 0.04), {elapsed * 1e3:.3f} ms")


def test_density_self_consistency():
    out = ldplab.experiment_density_check((0.1, 0.5, 1.0, 2.0), tol=1e-6)
    rows = out["estimates"]
    slow = max(r["seconds"] for r in rows)
    ok = out["pass"] and slow < 5
    fe = max(r["fe_residual"] for r in rows)
    ne = max(r["normalization_error"] for r in rows)
    assert record(2, "density solver self-consistency", ok,
                  f"max residual {fe:.1e}, max normalization error {ne:.1e}, slowest {slow:.2f} s")


def test_known_value_theta_one():
    out = ldplab.experiment_known_value(1.0, 10**6, seed=0, tol=1e-6)
    e = out["estimates"][0]
    assert record(3, "P{P_1 > 1/2} = log 2 at theta = 1", out["pass"],
                  f"solver error {abs(e['solver'] - math.log(2)):.1e}, "
                  f"MC {e['mc']:.5f} CI [{e['mc_ci'][0]:.5f}, {e['mc_ci'][1]:.5f}]")


def _slope_check(num, x, prediction, tol):
    t0 = time.perf_counter()
    out, rep = ldplab.experiment_slope(x, (1e-2, 1e-3, 1e-4, 1e-5), "density", tol=tol)
    elapsed = time.perf_counter() - t0
    assert out["prediction"] == prediction
    ok = out["pass"] and elapsed < 30
    return record(num, f"slope of log P{{P_1 <= {x:.4g}}}", ok,
                  f"fitted {rep.fitted_slope:.4f}, target {prediction:g} +- {tol}, {elapsed:.2f} s")


def test_slope_rate_one():
    assert _slope_check(4, 0.5, 1.0, 0.1)


def test_slope_rate_two():
    assert _slope_check(5, 1 / 3, 2.0, 0.15)


def test_joint_box_scaling():
    out, rep = ldplab.experiment_joint_box(thetas=(0.3, 0.1, 0.03, 0.01), n_samples=10**7,
                                           seed=0, tol=0.3)
    assert record(6, "joint box around (1/2, 0.45)", out["pass"],
                  f"fitted {rep.fitted_slope:.3f} +- {rep.slope_se:.3f}, target 1 +- 0.3")


def test_exp_approx_bound():
    out = ldplab.experiment_exp_approx((0.2, 0.5), (5, 10, 20), (0.3, 0.5), n_samples=10**6)
    cells = out["estimates"]
    margin = min(c["bound"] + 3 * c["se"] - c["frequency"] for c in cells)
    assert len(cells) == 12
    assert record(7, "exponential approximation bound", out["pass"],
                  f"12 cells, smallest slack {margin:.2e}")


def test_homozygosity_minimum():
    out = ldplab.experiment_homozygosity_min(range(1, 7), (2, 3), value_tol=1e-9, argmin_tol=1e-6)
    # second route: SLSQP from scipy must land on the same value
    agree = all(abs(min_hr_slsqp(r["n"], r["r"])[0] - r["exact"]) <= 1e-9
                for r in out["estimates"])
    ve = max(r["value_err"] for r in out["estimates"])
    ae = max(r["argmin_err"] for r in out["estimates"])
    assert record(8, "homozygosity minimum on n-allele layers", out["pass"] and agree,
                  f"value error {ve:.1e}, argmin error {ae:.1e}, SLSQP agrees: {agree}")


def test_rate_identities():
    grid = np.linspace(0, 1, 10**4 + 1)
    bad_in = sum(rate_In(n, p) != min(rate_S1(p), n) for n in (1, 2, 3, 5, 10) for p in grid)
    bad_j = sum(rate_J(r, p) != rate_S1(p ** (1 / (r - 1))) for r in (2, 3, 4) for p in grid)
    gen = np.random.default_rng(0)
    rand = gen.random(10**4)
    bad_in += sum(rate_In(4, p) != min(rate_S1(p), 4) for p in rand)
    bad_j += sum(rate_J(3, p) != rate_S1(math.sqrt(p)) for p in rand)
    assert record(9, "rate identities on dense grids", bad_in == 0 and bad_j == 0,
                  f"{grid.size} grid + {rand.size} random points, "
                  f"{bad_in} I_n mismatches, {bad_j} J mismatches")


def test_selection_ties_and_coexistence():
    ties = ldplab.experiment_selection_ties(range(1, 6))
    coex = ldplab.experiment_coexistence(0.01, -2.0, 2, n_samples=10**6, seed=0, min_mass=0.05)
    c = coex["estimates"][0]["classes"]
    ok = ties["pass"] and coex["pass"]
    assert record(10, "selection ties and coexistence", ok,
                  f"ties {[r['minimizers'] for r in ties['estimates']]}, zeros {ties['rate_zeros']}, "
                  f"class masses n=1 {c.get('1', 0):.3f}, n=2 {c.get('2', 0):.3f}")


def test_sampler_cross_validation():
    out = ldplab.experiment_sampler_xval((0.5, 1.0), n_samples=10**5, ks_tol=0.01)
    rows = out["estimates"]
    ks = max(max(r["ks_coords"]) for r in rows)
    kv = max(r["ks_total"] for r in rows)
    corr = max(abs(r["corr_h2_total"]) / r["corr_ci_half"] for r in rows)
    assert record(11, "GEM vs Gamma-subordinator samplers", out["pass"],
                  f"max coordinate KS {ks:.4f}, total KS {kv:.4f}, |corr| / CI half-width {corr:.2f}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
