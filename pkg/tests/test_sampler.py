import math

import numpy as np
import pytest
from scipy import stats

from pdlab.density import solve_g1
from pdlab.sampler import (RngStream, beta1theta_from_uniform, exp_approx_products,
                           pd_from_sticks, sample_beta1theta, sample_dirichlet_process, sample_gem,
                           sample_gamma_atoms, sample_gamma_batch, sample_p1n, sample_pd,
                           sample_pd_batch, sample_pd_gamma, sample_top_batch)


class Fixed:
    """Uniform source replaying a list, then repeating its last value."""

    def __init__(self, values):
        self.values = list(values)
        self.i = 0

    def random(self, size=None):
        if size is None:
            v = self.values[min(self.i, len(self.values) - 1)]
            self.i += 1
            return v
        return np.array([self.random() for _ in range(size)])


def test_inverse_cdf_values():
    assert beta1theta_from_uniform(0.75, 1.0) == pytest.approx(0.75)
    assert beta1theta_from_uniform(0.0, 0.3) == 0.0
    assert beta1theta_from_uniform(0.75, 0.5) == pytest.approx(0.9375)


def test_gem_hand_iteration():
    s = sample_gem(1.0, 0.2, Fixed([0.5]))
    assert s.sticks == pytest.approx((0.5, 0.25, 0.125))
    assert s.residual == pytest.approx(0.125)


def test_gem_residual_is_product():
    s = sample_gem(0.7, 1e-6, RngStream(3))
    assert s.residual == pytest.approx(math.prod(1 - u for u in s.betas), rel=1e-12)
    assert math.fsum(s.sticks) + s.residual == pytest.approx(1.0, abs=1e-12)


def test_gem_degenerate_first_stick():
    s = sample_gem(0.5, 1e-3, Fixed([1 - 1e-300]))
    assert s.sticks[0] == pytest.approx(1.0)
    assert len(s.sticks) == 1


def test_pd_from_sticks_rejects_hidden_atom():
    assert pd_from_sticks((0.2, 0.5, 0.1), 0.2) is None
    p = pd_from_sticks((0.5, 0.3, 0.15), 0.05)
    assert p.freqs == (0.5, 0.3, 0.15) and p.residual == pytest.approx(0.05)


def test_sample_pd_continues_until_residual_is_small():
    for seed in range(20):
        p = sample_pd(0.5, 0.3, RngStream(seed))
        assert p.residual < p.freqs[-1]


def test_sample_p1n():
    assert sample_p1n(1.0, 2, Fixed([0.2, 0.625])) == pytest.approx(0.5)
    u = [sample_p1n(0.5, 1, RngStream(7, i)) for i in range(4000)]
    assert stats.kstest(u, stats.beta(1, 0.5).cdf).pvalue > 1e-3


def test_p1n_lower_bound_for_full_sequence():
    # the largest atom is at least the stick left after it, so P_1 >= 1/(m+1) fails only if mass is missing
    batch = sample_pd_batch(1.0, 2000, 1e-12, RngStream(11))
    m = np.count_nonzero(batch.freqs, axis=1)
    assert np.all(batch.freqs[:, 0] >= 1 / (m + 1) - 1e-12)


def test_beta_sampler_law():
    x = [sample_beta1theta(2.0, RngStream(5, i)) for i in range(4000)]
    assert stats.kstest(x, stats.beta(1, 2).cdf).pvalue > 1e-3


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(42, 1).generator().random(5)
    b = RngStream(42, 1).generator().random(5)
    c = RngStream(42, 2).generator().random(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        RngStream(-1)


def test_batch_matches_scalar_rule_in_law():
    batch = sample_pd_batch(0.5, 20000, 1e-10, RngStream(1))
    scalar = [sample_pd(0.5, 1e-10, RngStream(2, i)).freqs[0] for i in range(5000)]
    assert stats.ks_2samp(batch.freqs[:, 0], scalar).pvalue > 1e-3
    assert np.all(batch.residual < np.where(batch.freqs > 0, batch.freqs, np.inf).min(axis=1))


def test_top_batch_is_exact_prefix():
    top = sample_top_batch(0.5, 3, 20000, RngStream(4))
    full = sample_pd_batch(0.5, 20000, 1e-12, RngStream(5)).top(3)
    for k in range(3):
        assert stats.ks_2samp(top[:, k], full[:, k]).statistic < 0.02


@pytest.mark.slow
def test_first_coordinate_matches_density_cdf():
    table = solve_g1(0.5)
    top = sample_top_batch(0.5, 1, 10**6, RngStream(0))[:, 0]
    ks = stats.kstest(top, lambda x: table.cdf(np.maximum(x, table.floor)))
    assert ks.statistic <= 0.005


def test_gamma_atoms_total_law():
    totals = [sample_gamma_atoms(0.5, 1e-3, RngStream(9, i)).total for i in range(3000)]
    assert stats.kstest(totals, stats.gamma(0.5).cdf).pvalue > 1e-3


def test_gamma_atoms_invariants():
    ga = sample_gamma_atoms(1.0, 1e-3, RngStream(1))
    assert list(ga.atoms) == sorted(ga.atoms, reverse=True)
    assert ga.total >= math.fsum(ga.atoms)
    p = sample_pd_gamma(1.0, 1e-3, RngStream(1))
    assert p.mass + p.residual == pytest.approx(1.0)


def test_gamma_cutoff_guard():
    with pytest.raises(ValueError):
        sample_gamma_atoms(1.0, 0.5, RngStream(0))


def test_gamma_batch_against_gem():
    gam, totals = sample_gamma_batch(1.0, 1e-3, 50000, RngStream(3), min_atoms=3)
    gem = sample_pd_batch(1.0, 50000, 1e-12, RngStream(4))
    for k in range(3):
        assert stats.ks_2samp(gam.top(3)[:, k], gem.top(3)[:, k]).statistic < 0.015
    assert stats.kstest(totals, stats.gamma(1.0).cdf).statistic < 0.01
    assert abs(np.corrcoef(gam.homozygosity(2), totals)[0, 1]) < 0.02


def test_dirichlet_process_labels_and_weights():
    rng = RngStream(8, 3)
    d = sample_dirichlet_process(0.7, 1e-8, rng)
    assert len(set(d.labels)) == len(d.labels)
    assert d.weights == sample_pd(0.7, 1e-8, RngStream(8, 3))


def test_dirichlet_process_base_measure_mean():
    masses = [sample_dirichlet_process(1.0, 1e-6, RngStream(13, i)).mass_below(0.3)
              for i in range(5000)]
    m, se = np.mean(masses), np.std(masses) / math.sqrt(len(masses))
    assert abs(m - 0.3) < 4 * se


def test_exp_approx_products_edges():
    assert np.all(exp_approx_products(0.5, 0, 10, RngStream(0)) == 1.0)
    prods = exp_approx_products(0.5, 5, 1000, RngStream(0))
    assert np.all((prods >= 0) & (prods <= 1))
