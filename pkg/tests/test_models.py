import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boostvi import (
    Dataset,
    Mixture,
    auroc,
    logistic_regression_model,
    matrix_factorization_model,
    predictive_metrics,
    synthetic_bimodal_target,
)
from boostvi.densities import BaseDensity, Family
from boostvi.models import grad_log_joint_batch, log_joint_batch

from oracles import BIMODAL_LOGPDF_AT_0, finite_difference, gaussian_logpdf, relative_error


class TestBimodalTarget:
    def test_default_parameters_at_zero(self):
        model = synthetic_bimodal_target()
        assert model.log_joint(np.array([0.0])) == pytest.approx(
            BIMODAL_LOGPDF_AT_0, abs=1e-12
        )

    def test_degenerate_mixture_is_single_gaussian(self):
        model = synthetic_bimodal_target(pi=(1.0, 0.0))
        z = np.array([0.3])
        assert model.log_joint(z) == pytest.approx(
            float(gaussian_logpdf(0.3, -1.0, 0.5)), rel=1e-12
        )

    def test_normalized_density(self):
        model = synthetic_bimodal_target()
        z = np.linspace(-12, 12, 12001)
        mass = np.trapezoid(np.exp(model.posterior_log_pdf(z)), z)
        assert mass == pytest.approx(1.0, abs=1e-8)

    @given(z=st.floats(min_value=-4, max_value=4))
    @settings(max_examples=40, deadline=None)
    def test_gradient_matches_finite_differences(self, z):
        model = synthetic_bimodal_target()
        g = model.grad_log_joint(np.array([z]))
        fd = finite_difference(lambda x: model.log_joint(x), np.array([z]))
        assert relative_error(g, fd) < 1e-5

    def test_invalid_weights_rejected(self):
        with pytest.raises(ValueError):
            synthetic_bimodal_target(pi=(0.5, 0.6))


class TestLogisticRegression:
    def test_single_point_at_zero_weights(self):
        data = Dataset(features=np.array([[2.5]]), labels=np.array([1.0]))
        model = logistic_regression_model(data)
        # standard-normal prior at 0 plus log sigmoid(0)
        assert model.log_joint(np.zeros(1)) == pytest.approx(-1.612086, abs=1e-6)

    def test_empty_dataset_prior_only(self):
        data = Dataset(features=np.empty((0, 2)), labels=np.empty(0))
        model = logistic_regression_model(data)
        assert model.log_joint(np.zeros(2)) == pytest.approx(-1.837877, abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        data = Dataset(
            features=rng.standard_normal((20, 3)),
            labels=(rng.uniform(size=20) < 0.5).astype(float),
        )
        model = logistic_regression_model(data)
        w = rng.standard_normal(3)
        fd = finite_difference(lambda x: model.log_joint(x), w)
        assert relative_error(model.grad_log_joint(w), fd) < 1e-4

    def test_batch_consistency(self):
        rng = np.random.default_rng(6)
        data = Dataset(
            features=rng.standard_normal((10, 2)),
            labels=(rng.uniform(size=10) < 0.5).astype(float),
        )
        model = logistic_regression_model(data)
        W = rng.standard_normal((4, 2))
        batched = log_joint_batch(model, W)
        singles = np.array([model.log_joint(w) for w in W])
        np.testing.assert_allclose(batched, singles, rtol=1e-12)

    def test_nonbinary_labels_rejected(self):
        with pytest.raises(ValueError, match="binary"):
            logistic_regression_model(
                Dataset(features=np.ones((2, 1)), labels=np.array([0.0, 2.0]))
            )


class TestMatrixFactorization:
    def test_all_zero_point(self):
        data = Dataset(features=None, labels=np.zeros((1, 1)), mask=np.ones((1, 1), bool))
        model = matrix_factorization_model(data, latent_dim=1)
        assert model.dim == 2
        assert model.log_joint(np.zeros(2)) == pytest.approx(-2.756816, abs=1e-6)

    def test_fully_masked_is_prior_only(self):
        R = np.arange(6.0).reshape(2, 3)
        data = Dataset(features=None, labels=R, mask=np.zeros_like(R, dtype=bool))
        model = matrix_factorization_model(data, latent_dim=2)
        z = np.random.default_rng(0).standard_normal(model.dim)
        expected = -0.5 * np.sum(z * z) - 0.5 * model.dim * np.log(2 * np.pi)
        assert model.log_joint(z) == pytest.approx(expected, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        R = rng.standard_normal((5, 4))
        mask = rng.uniform(size=R.shape) < 0.6
        data = Dataset(features=None, labels=R, mask=mask)
        model = matrix_factorization_model(data, latent_dim=2)
        z = rng.standard_normal(model.dim)
        fd = finite_difference(lambda x: model.log_joint(x), z)
        assert relative_error(model.grad_log_joint(z), fd) < 1e-4

    def test_batch_consistency(self):
        rng = np.random.default_rng(8)
        data = Dataset(
            features=None,
            labels=rng.standard_normal((3, 4)),
            mask=np.ones((3, 4), bool),
        )
        model = matrix_factorization_model(data, latent_dim=2)
        Z = rng.standard_normal((5, model.dim))
        np.testing.assert_allclose(
            grad_log_joint_batch(model, Z),
            np.stack([model.grad_log_joint(z) for z in Z]),
            rtol=1e-12,
        )


class TestAuroc:
    def test_perfect_separation(self):
        assert auroc(np.array([1.0, 0.0]), np.array([0.9, 0.1])) == 1.0

    def test_all_ties_half_credit(self):
        assert auroc(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == 0.5

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both classes"):
            auroc(np.array([1.0, 1.0]), np.array([0.2, 0.8]))

    @given(
        scores=st.lists(
            st.floats(min_value=0, max_value=1, allow_nan=False), min_size=4, max_size=12
        )
    )
    @settings(max_examples=40, deadline=None)
    def test_complement_symmetry(self, scores):
        n = len(scores)
        labels = np.array([1.0] * (n // 2) + [0.0] * (n - n // 2))
        scores = np.asarray(scores)
        a = auroc(labels, scores)
        b = auroc(1.0 - labels, scores)
        assert a + b == pytest.approx(1.0, abs=1e-12)

    def test_order_invariance(self):
        rng = np.random.default_rng(9)
        labels = np.array([1, 1, 0, 0, 1, 0], dtype=float)
        scores = rng.uniform(size=6)
        perm = rng.permutation(6)
        assert auroc(labels, scores) == pytest.approx(auroc(labels[perm], scores[perm]))


class TestPredictiveMetrics:
    def test_exact_reconstruction_zero_mse(self):
        R = np.zeros((2, 2))
        test = Dataset(features=None, labels=R, mask=np.ones_like(R, dtype=bool))
        posterior = Mixture.single(
            BaseDensity(Family.GAUSSIAN, np.zeros(8), np.full(8, 1e-3))
        )
        metrics = predictive_metrics("matrix_factorization", posterior, test, 256, 0)
        assert metrics["mse"] == pytest.approx(0.0, abs=1e-4)

    def test_unknown_kind_rejected(self):
        posterior = Mixture.single(BaseDensity(Family.GAUSSIAN, [0.0], [1.0]))
        with pytest.raises(ValueError, match="kind"):
            predictive_metrics("poisson", posterior, Dataset(None, np.zeros((1, 1))), 8, 0)
