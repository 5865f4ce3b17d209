import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boostvi import (
    BaseDensity,
    CoarseGridError,
    Family,
    Mixture,
    QuadratureGrid,
    base_log_prob,
    entropy_closed_form,
    kl_gaussian_closed,
    mixture_log_prob,
    quadrature_kl,
    sup_norm,
)

from oracles import (
    BIMODAL_LOGPDF_AT_0,
    SINGLE_GAUSSIAN_FIT,
    bimodal_logpdf,
    gaussian_logpdf,
    laplace_logpdf,
)


def gaussian(loc, scale, **kw):
    return BaseDensity(Family.GAUSSIAN, np.atleast_1d(loc), np.atleast_1d(scale), **kw)


def laplace(loc, scale, **kw):
    return BaseDensity(Family.LAPLACE, np.atleast_1d(loc), np.atleast_1d(scale), **kw)


scales = st.floats(min_value=0.05, max_value=5.0, allow_nan=False)
locs = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)


class TestBaseLogProb:
    def test_standard_normal_at_zero(self):
        assert base_log_prob(gaussian(0.0, 1.0), [0.0]) == pytest.approx(-0.918939, abs=1e-6)

    def test_standard_laplace_at_zero(self):
        assert base_log_prob(laplace(0.0, 1.0), [0.0]) == pytest.approx(-0.693147, abs=1e-6)

    def test_narrow_gaussian_at_mode(self):
        assert base_log_prob(gaussian(1.0, 0.5), [1.0]) == pytest.approx(-0.225791, abs=1e-6)

    def test_batch_shape(self):
        d = gaussian([0.0, 1.0], [1.0, 2.0])
        out = d.log_prob(np.zeros((7, 2)))
        assert out.shape == (7,)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError, match="dimension"):
            gaussian(0.0, 1.0).log_prob(np.zeros((3, 2)))

    @given(loc=locs, scale=scales, z=locs)
    @settings(max_examples=50, deadline=None)
    def test_matches_reference_gaussian(self, loc, scale, z):
        got = base_log_prob(gaussian(loc, scale), [z])
        assert got == pytest.approx(float(gaussian_logpdf(z, loc, scale)), rel=1e-12)

    @given(loc=locs, scale=scales, z=locs)
    @settings(max_examples=50, deadline=None)
    def test_matches_reference_laplace(self, loc, scale, z):
        got = base_log_prob(laplace(loc, scale), [z])
        assert got == pytest.approx(float(laplace_logpdf(z, loc, scale)), rel=1e-12)


class TestDegeneracyGuards:
    def test_scale_below_floor_rejected(self):
        with pytest.raises(ValueError, match="scale_floor"):
            gaussian(0.0, 1e-6)

    def test_loc_outside_box_rejected(self):
        with pytest.raises(ValueError, match="param_box"):
            gaussian(2e3, 1.0)

    def test_nonpositive_floor_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            gaussian(0.0, 1.0, scale_floor=0.0)


class TestMixtureLogProb:
    def test_single_atom_identity(self):
        a = gaussian(0.3, 0.8)
        m = Mixture.single(a)
        z = np.array([[-1.0], [0.0], [2.0]])
        np.testing.assert_allclose(m.log_prob(z), a.log_prob(z))

    def test_duplicate_atoms_symmetry(self):
        a = gaussian(0.3, 0.8)
        m = Mixture((a, a), np.array([0.5, 0.5]))
        assert mixture_log_prob(m, [0.1]) == pytest.approx(a.log_prob([0.1]), rel=1e-12)

    def test_bimodal_two_term_sum(self):
        m = Mixture(
            (gaussian(-1.0, 0.5), gaussian(1.0, 0.5)), np.array([0.4, 0.6])
        )
        assert mixture_log_prob(m, [0.0]) == pytest.approx(BIMODAL_LOGPDF_AT_0, abs=1e-12)

    def test_weight_sum_validation(self):
        with pytest.raises(ValueError, match="sum to 1"):
            Mixture((gaussian(0, 1), gaussian(1, 1)), np.array([0.5, 0.6]))

    def test_from_unnormalized(self):
        m = Mixture.from_unnormalized((gaussian(0, 1), gaussian(1, 1)), [2.0, 6.0])
        np.testing.assert_allclose(m.weights, [0.25, 0.75])

    @given(w=st.floats(min_value=0.01, max_value=0.99))
    @settings(max_examples=30, deadline=None)
    def test_integrates_to_one(self, w):
        m = Mixture((gaussian(-1, 0.5), laplace(1, 0.7)), np.array([w, 1 - w]))
        # a fine grid keeps the trapezoid error at the Laplace kink below tol
        z = np.linspace(-20, 20, 32001)
        mass = np.trapezoid(np.exp(m.log_prob(z.reshape(-1, 1))), z)
        assert mass == pytest.approx(1.0, abs=1e-6)

    def test_zero_weight_component_ignored(self):
        a, b = gaussian(0, 1), gaussian(50, 1)
        m = Mixture((a, b), np.array([1.0, 0.0]))
        assert m.log_prob([0.0]) == pytest.approx(a.log_prob([0.0]), rel=1e-12)


class TestSampling:
    def test_same_seed_identical(self):
        m = Mixture((gaussian(-1, 0.5), gaussian(1, 0.5)), np.array([0.4, 0.6]))
        np.testing.assert_array_equal(m.sample(64, 7), m.sample(64, 7))

    def test_degenerate_weights(self):
        m = Mixture((gaussian(0.0, 0.01), gaussian(100.0, 0.01)), np.array([1.0, 0.0]))
        z = m.sample(500, 3)
        assert np.all(np.abs(z) < 1.0)

    def test_moments_gaussian(self):
        n = 100_000
        z = gaussian(0.0, 1.0).sample(n, 11)
        assert abs(z.mean()) < 4.0 / math.sqrt(n)
        assert z.var() == pytest.approx(1.0, rel=0.05)

    def test_moments_laplace(self):
        n = 100_000
        z = laplace(0.0, 1.0).sample(n, 11)
        # standard Laplace has variance 2 b^2
        assert abs(z.mean()) < 6.0 / math.sqrt(n)
        assert z.var() == pytest.approx(2.0, rel=0.05)


class TestEntropyAndSupNorm:
    def test_entropy_values(self):
        assert entropy_closed_form(gaussian(0, 1)) == pytest.approx(1.418939, abs=1e-6)
        assert entropy_closed_form(laplace(0, 1)) == pytest.approx(1.693147, abs=1e-6)
        assert entropy_closed_form(gaussian([0, 0], [1, 1])) == pytest.approx(2.837877, abs=1e-6)

    def test_sup_norm_values(self):
        assert sup_norm(gaussian(0, 0.5)) == pytest.approx(0.797885, abs=1e-6)
        assert sup_norm(laplace(0, 1)) == pytest.approx(0.5, abs=1e-12)
        assert sup_norm(gaussian(0, 1)) == pytest.approx(0.398942, abs=1e-6)

    @given(
        family=st.sampled_from([Family.GAUSSIAN, Family.LAPLACE]),
        scale=st.lists(scales, min_size=1, max_size=4),
        loc=st.lists(locs, min_size=1, max_size=4),
    )
    @settings(max_examples=80, deadline=None)
    def test_entropy_plus_log_sup_identity(self, family, scale, loc):
        # entropy and peak height trade off exactly: 1/2 per dimension for
        # Gaussians, 1 per dimension for Laplace, independent of parameters
        dim = min(len(scale), len(loc))
        d = BaseDensity(family, loc[:dim], scale[:dim])
        per_dim = 0.5 if family is Family.GAUSSIAN else 1.0
        assert d.entropy() + d.log_sup_norm() == pytest.approx(per_dim * dim, abs=1e-10)


class TestClosedFormKL:
    def test_identity(self):
        assert kl_gaussian_closed(gaussian(0, 1), gaussian(0, 1)) == 0.0

    def test_mean_shift(self):
        assert kl_gaussian_closed(gaussian(0, 1), gaussian(1, 1)) == pytest.approx(0.5)

    def test_scale_change(self):
        got = kl_gaussian_closed(gaussian(0, 2), gaussian(0, 1))
        # 0.5 * (ratio - 1 - log ratio) with variance ratio 4
        assert got == pytest.approx(0.5 * (4 - 1 - math.log(4)), abs=1e-9)

    def test_rejects_laplace(self):
        with pytest.raises(ValueError, match="Gaussian"):
            kl_gaussian_closed(laplace(0, 1), gaussian(0, 1))

    @given(l1=locs, s1=scales, l2=locs, s2=scales)
    @settings(max_examples=30, deadline=None)
    def test_nonnegative(self, l1, s1, l2, s2):
        assert kl_gaussian_closed(gaussian(l1, s1), gaussian(l2, s2)) >= -1e-12


class TestQuadratureKL:
    GRID = QuadratureGrid(-8.0, 8.0, 4001)

    def test_self_kl_zero(self):
        q = Mixture.single(gaussian(0, 1))
        val = quadrature_kl(q, lambda z: gaussian_logpdf(z, 0.0, 1.0), self.GRID)
        assert abs(val) < 1e-6

    def test_matches_closed_form(self):
        q = Mixture.single(gaussian(0, 1))
        val = quadrature_kl(q, lambda z: gaussian_logpdf(z, 1.0, 1.0), self.GRID)
        assert val == pytest.approx(0.5, abs=1e-4)

    def test_bimodal_fit_positive_and_grid_stable(self):
        loc, scale = SINGLE_GAUSSIAN_FIT
        q = Mixture.single(gaussian(loc, scale))
        val = quadrature_kl(q, bimodal_logpdf, self.GRID, refine_tol=1e-6)
        assert val > 0.05

    def test_unnormalized_target_invariance(self):
        q = Mixture.single(gaussian(0.2, 0.9))
        a = quadrature_kl(q, bimodal_logpdf, self.GRID)
        b = quadrature_kl(q, lambda z: bimodal_logpdf(z) + 123.0, self.GRID)
        assert a == pytest.approx(b, abs=1e-9)

    def test_coarse_grid_raises(self):
        q = Mixture.single(gaussian(0.0, 0.05))
        with pytest.raises(CoarseGridError):
            quadrature_kl(
                q, bimodal_logpdf, QuadratureGrid(-8.0, 8.0, 21), refine_tol=1e-8
            )

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            QuadratureGrid(1.0, -1.0, 100)
        assert QuadratureGrid(0.0, 1.0, 101).doubled().n_points == 201
