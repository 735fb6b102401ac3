"""Ground-truth mixture: sampling, density, score and dataset files."""

import numpy as np
import pytest

from src.config.settings import Settings
from src.diffusion.target import (
    GaussianComponent,
    GmmTarget,
    default_target,
    diffuse_target,
    diffused_score,
    load_dataset,
    log_density,
    mixture_moments,
    sample,
    save_dataset,
    score,
)
from src.errors import TargetError


def _direct_density(target: GmmTarget, x: np.ndarray) -> np.ndarray:
    total = np.zeros(x.shape[0])
    for c in target.components:
        mean, cov = np.array(c.mean), np.array(c.cov)
        quad = np.sum((x - mean) ** 2 / cov, axis=1)
        total += c.weight * np.exp(-0.5 * quad) / (2.0 * np.pi * np.sqrt(np.prod(cov)))
    return total


def _finite_difference_score(target: GmmTarget, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(x)
    for axis in range(x.shape[1]):
        step = np.zeros(x.shape[1])
        step[axis] = h
        grad[:, axis] = (log_density(target, x + step) - log_density(target, x - step)) / (2 * h)
    return grad


def _grid(limit: float = 7.0, points: int = 21) -> np.ndarray:
    axis = np.linspace(-limit, limit, points)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


class TestDefaultTarget:
    def test_parameters(self, target):
        np.testing.assert_array_equal(target.weights, [0.5, 0.5])
        np.testing.assert_array_equal(target.means, [[-4.0, -4.0], [4.0, 4.0]])
        np.testing.assert_array_equal(target.covs, [[0.3, 0.1], [0.2, 0.2]])

    def test_sigma_as_standard_deviation(self):
        squared = default_target(Settings(sigma_is_std=True))
        np.testing.assert_allclose(squared.covs, [[0.09, 0.01], [0.04, 0.04]])

    @pytest.mark.parametrize(
        "components",
        [
            (GaussianComponent(0.6, (0.0, 0.0), (1.0, 1.0)),),
            (GaussianComponent(1.0, (0.0, 0.0), (1.0, -1.0)),),
            (GaussianComponent(0.5, (0.0, 0.0), (1.0, 1.0)), GaussianComponent(0.5, (0.0,), (1.0,))),
            (),
        ],
    )
    def test_rejects_invalid_mixtures(self, components):
        with pytest.raises(TargetError):
            GmmTarget(components)


class TestSampling:
    def test_cluster_means(self, target):
        dataset = sample(target, 10_000, seed=0)
        for k, mean in enumerate(target.means):
            cluster = dataset.points[dataset.labels == k]
            np.testing.assert_allclose(cluster.mean(axis=0), mean, atol=0.05)

    def test_single_point(self, standard_target):
        dataset = sample(standard_target, 1, seed=3)
        assert dataset.points.shape == (1, 2)
        assert np.all(np.isfinite(dataset.points))

    def test_same_seed_same_points(self, target):
        np.testing.assert_array_equal(sample(target, 500, 7).points, sample(target, 500, 7).points)

    def test_rejects_empty(self, target):
        with pytest.raises(TargetError):
            sample(target, 0, seed=0)

    def test_moments_match_closed_form(self, target):
        points = sample(target, 100_000, seed=11).points
        mean, cov = mixture_moments(target)
        n = points.shape[0]

        mean_se = points.std(axis=0) / np.sqrt(n)
        assert np.all(np.abs(points.mean(axis=0) - mean) < 4 * mean_se)

        centred = points - points.mean(axis=0)
        for i in range(2):
            for j in range(2):
                products = centred[:, i] * centred[:, j]
                se = products.std() / np.sqrt(n)
                assert abs(products.mean() - cov[i, j]) < 4 * se


class TestLogDensity:
    def test_standard_normal_at_mean(self, standard_target):
        value = log_density(standard_target, np.zeros((1, 2)))
        assert value[0] == pytest.approx(-np.log(2.0 * np.pi), abs=1e-12)

    def test_matches_direct_summation(self, target):
        x = np.array([[-4.0, -4.0], [0.0, 0.0], [4.0, 4.0], [1.5, -2.0]])
        np.testing.assert_allclose(np.exp(log_density(target, x)), _direct_density(target, x), rtol=1e-10)

    def test_finite_far_from_modes(self, target):
        assert np.isfinite(log_density(target, np.array([[100.0, 100.0]]))[0])
        assert np.all(np.isfinite(score(target, np.array([[100.0, 100.0], [-1e3, 1e3]]))))


class TestScore:
    def test_zero_at_single_component_mean(self, standard_target):
        np.testing.assert_array_equal(score(standard_target, np.zeros((1, 2))), [[0.0, 0.0]])

    def test_matches_finite_differences_on_grid(self, target):
        x = _grid()
        np.testing.assert_allclose(score(target, x), _finite_difference_score(target, x), atol=1e-5)

    def test_unit_alpha_bar_gives_data_score(self, target):
        x = _grid(points=9)
        np.testing.assert_allclose(score(diffuse_target(target, 1.0), x), score(target, x), atol=1e-12)

    def test_vanishing_alpha_bar_gives_standard_normal_score(self, target):
        x = _grid(points=9)
        np.testing.assert_allclose(score(diffuse_target(target, 1e-12), x), -x, atol=1e-5)

    @pytest.mark.parametrize("t", [0, 18, 54, 99])
    def test_diffused_score_matches_finite_differences(self, target, cosine_schedule, t):
        x = _grid(points=11)
        diffused = diffuse_target(target, float(cosine_schedule.alpha_bar[t]))
        np.testing.assert_allclose(
            diffused_score(target, cosine_schedule, t, x),
            _finite_difference_score(diffused, x),
            atol=1e-5,
        )

    def test_noise_score_identity(self, target, cosine_schedule):
        t = 54
        ab = cosine_schedule.alpha_bar[t]
        x = _grid(points=5)
        s = diffused_score(target, cosine_schedule, t, x)
        eps = -np.sqrt(1.0 - ab) * s
        np.testing.assert_allclose(-eps / np.sqrt(1.0 - ab), s, rtol=1e-14)


class TestDatasetFiles:
    def test_round_trip(self, tmp_path, target, small_dataset):
        csv_path, sidecar = save_dataset(small_dataset, target, tmp_path / "dataset.csv")
        assert sidecar.exists()
        loaded, loaded_target = load_dataset(csv_path)
        np.testing.assert_array_equal(loaded.points, small_dataset.points)
        np.testing.assert_array_equal(loaded.labels, small_dataset.labels)
        assert loaded.seed == small_dataset.seed
        assert loaded_target == target
