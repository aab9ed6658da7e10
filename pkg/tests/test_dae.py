"""Corruption, reconstruction loss, and the score-vector property."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from statereify import dae as dm
from statereify.dae import Dae, DenoisingAutoencoder


def exact_two_point_dae(x1, x2, sigma=0.1):
    """1-D DAE whose decoder line passes exactly through (tanh(x), x) for
    the two chosen points, so reconstruction is exact there."""
    h1, h2 = np.tanh(x1), np.tanh(x2)
    slope = (x2 - x1) / (h2 - h1)
    intercept = x1 - slope * h1
    return Dae.from_arrays(
        [[1.0]], [0.0], [[slope]], [intercept], sigma=sigma
    )


class TestCorrupt:
    def test_zero_sigma_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(dm.corrupt(x, 0.0, seed=1), x)

    def test_noise_scale(self):
        x = np.zeros((100, 100))
        noisy = dm.corrupt(x, 0.5, seed=3)
        assert abs(noisy.std() - 0.5) < 0.01
        assert abs(noisy.mean()) < 0.02

    def test_seed_reproducibility(self):
        x = np.ones((4, 4))
        np.testing.assert_array_equal(
            dm.corrupt(x, 0.3, seed=7), dm.corrupt(x, 0.3, seed=7)
        )

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            dm.corrupt(np.zeros(3), -0.1)


class TestRecLoss:
    def test_exact_reconstruction_no_noise_gives_zero(self):
        dae = exact_two_point_dae(0.3, -0.8)
        batch = np.array([[0.3], [-0.8]])
        loss = dm.rec_loss(dae, batch, noise=np.zeros((2, 1)))
        assert loss.item() == pytest.approx(0.0, abs=1e-24)

    def test_identity_init_hand_noise_hand_value(self):
        dae = Dae.from_arrays(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 0.5)
        x = np.array([[0.4, -0.2]])
        noise = np.array([[0.1, -0.3]])
        loss = dm.rec_loss(dae, x, noise=noise)
        expected = np.sum((np.tanh(x + noise) - x) ** 2)
        assert loss.item() == pytest.approx(expected, rel=1e-12)

    def test_batch_mean_of_per_example_values(self):
        rng = np.random.default_rng(2)
        dae = Dae.init(3, 2, 0.2, seed=2)
        batch = rng.normal(size=(2, 3))
        noise = rng.normal(0, 0.2, size=(2, 3))
        both = dm.rec_loss(dae, batch, noise=noise).item()
        first = dm.rec_loss(dae, batch[:1], noise=noise[:1]).item()
        second = dm.rec_loss(dae, batch[1:], noise=noise[1:]).item()
        assert both == pytest.approx((first + second) / 2, rel=1e-12)

    def test_nonnegative_on_random_inputs(self):
        rng = np.random.default_rng(11)
        dae = Dae.init(4, 3, 0.3, seed=11)
        for _ in range(20):
            batch = rng.normal(size=(5, 4))
            assert dm.rec_loss(dae, batch, seed=1).item() >= 0.0

    def test_empty_batch_rejected(self):
        dae = Dae.init(2, 2, 0.1)
        with pytest.raises(ValueError):
            dm.rec_loss(dae, np.zeros((0, 2)))


class TestScoreEstimate:
    def test_zero_at_exactly_reconstructed_points(self):
        dae = exact_two_point_dae(0.3, -0.8, sigma=0.1)
        score = dm.score_estimate(dae, np.array([[0.3], [-0.8]]))
        np.testing.assert_allclose(score, 0.0, atol=1e-10)

    def test_sigma_zero_rejected(self):
        dae = Dae.init(2, 2, 0.0)
        with pytest.raises(ValueError):
            dm.score_estimate(dae, np.zeros((1, 2)))

    def test_gaussian_training_recovers_analytic_score(self):
        """On unit-Gaussian data the displacement field tracks -x."""
        rng = np.random.default_rng(0)
        samples = rng.normal(size=(4000, 1))
        est = DenoisingAutoencoder(
            bottleneck=8,
            sigma=0.1,
            epochs=120,
            batch_size=256,
            learning_rate=0.005,
            decoder_refit=10,
            seed=0,
        ).fit(samples)
        grid = np.linspace(-2, 2, 101).reshape(-1, 1)
        scores = est.score_vectors(grid).ravel()
        corr = np.corrcoef(scores, -grid.ravel())[0, 1]
        assert corr > 0.95

    def test_ring_scores_point_toward_the_ring(self):
        rng = np.random.default_rng(1)
        angles = rng.uniform(0, 2 * np.pi, 1500)
        ring = np.column_stack([np.cos(angles), np.sin(angles)])
        est = DenoisingAutoencoder(
            bottleneck=16, sigma=0.25, epochs=60, learning_rate=0.01, seed=1
        ).fit(ring)

        probe_angles = np.linspace(0, 2 * np.pi, 40, endpoint=False)
        directions = np.column_stack([np.cos(probe_angles), np.sin(probe_angles)])
        outside = 1.5 * directions
        inside = 0.5 * directions
        radial_out = np.mean(np.sum(est.score_vectors(outside) * directions, axis=1))
        radial_in = np.mean(np.sum(est.score_vectors(inside) * directions, axis=1))
        assert radial_out < 0  # pulled inward
        assert radial_in > 0  # pushed outward


class TestReconstructionRatio:
    def test_equal_batches_give_one(self):
        dae = Dae.init(3, 2, 0.2, seed=5)
        x = np.random.default_rng(5).normal(size=(4, 3))
        assert dm.reconstruction_ratio(dae, x, x) == pytest.approx(1.0)

    def test_offset_inflates_ratio_on_trained_model(self):
        rng = np.random.default_rng(6)
        data = rng.normal(0, 0.3, size=(1200, 2))
        est = DenoisingAutoencoder(
            bottleneck=4, sigma=0.2, epochs=40, learning_rate=0.01, seed=6
        ).fit(data)
        shifted = data[:100] + np.array([4.0, -4.0])
        assert dm.reconstruction_ratio(est.dae_, data[:100], shifted) > 1.0

    def test_hand_single_example_batches(self):
        dae = Dae.from_arrays(np.eye(1), [0.0], np.eye(1), [0.0], 0.1)
        clean = np.array([[0.2]])
        shifted = np.array([[0.9]])
        expected = (np.tanh(0.9) - 0.9) ** 2 / (np.tanh(0.2) - 0.2) ** 2
        assert dm.reconstruction_ratio(dae, clean, shifted) == pytest.approx(
            expected, rel=1e-12
        )

    def test_zero_clean_error_raises(self):
        # zero-bias net reconstructs the zero vector exactly
        dae = Dae.from_arrays(np.eye(2), np.zeros(2), np.eye(2), np.zeros(2), 0.1)
        clean = np.zeros((3, 2))
        with pytest.raises(ZeroDivisionError):
            dm.reconstruction_ratio(dae, clean, clean + 1.0)


class TestEstimator:
    def test_transform_is_deterministic(self):
        rng = np.random.default_rng(9)
        data = rng.normal(size=(300, 3))
        est = DenoisingAutoencoder(bottleneck=2, sigma=0.1, epochs=5, seed=9).fit(data)
        np.testing.assert_array_equal(est.transform(data), est.transform(data))

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            DenoisingAutoencoder().transform(np.zeros((1, 2)))

    def test_clone_keeps_params(self):
        est = DenoisingAutoencoder(bottleneck=5, sigma=0.7)
        assert clone(est).get_params() == est.get_params()
