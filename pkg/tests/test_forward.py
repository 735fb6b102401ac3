"""Forward processes: Gaussian closed form, Markov chain and digit pseudo-noise."""

import numpy as np
import pandas as pd
import pytest
from scipy import special, stats

from src.diffusion.forward import (
    ForwardKind,
    deterministic_eps,
    diffuse,
    diffuse_chain,
    digit_fraction,
    dump_forward_trajectory,
    forward_trajectory,
    inverse_normal_cdf,
)
from src.diffusion.schedule import make_linear
from src.diffusion.target import sample
from src.errors import StepRangeError, UsageError


class TestMixingIdentity:
    @pytest.mark.parametrize("kind", list(ForwardKind))
    def test_noised_points_satisfy_identity(self, kind, small_dataset, cosine_schedule, rng):
        t = rng.integers(0, 100, size=len(small_dataset))
        batch = diffuse(kind, small_dataset.points, t, cosine_schedule, rng)
        ab = cosine_schedule.alpha_bar[t][:, None]
        expected = np.sqrt(ab) * batch.x0 + np.sqrt(1.0 - ab) * batch.eps
        np.testing.assert_allclose(batch.xt, expected, atol=1e-12)

    def test_unit_alpha_bar_leaves_points(self, small_dataset, rng):
        schedule = make_linear(1, 1e-20, 1e-20)
        assert schedule.alpha_bar[0] == 1.0
        t = np.zeros(len(small_dataset), dtype=np.int64)
        batch = diffuse(ForwardKind.GAUSSIAN, small_dataset.points, t, schedule, rng)
        np.testing.assert_array_equal(batch.xt, small_dataset.points)

    def test_rejects_out_of_range_steps(self, small_dataset, cosine_schedule, rng):
        t = np.full(len(small_dataset), 100)
        with pytest.raises(StepRangeError):
            diffuse(ForwardKind.GAUSSIAN, small_dataset.points, t, cosine_schedule, rng)

    def test_gaussian_needs_generator(self, small_dataset, cosine_schedule):
        t = np.zeros(len(small_dataset), dtype=np.int64)
        with pytest.raises(UsageError):
            diffuse(ForwardKind.GAUSSIAN, small_dataset.points, t, cosine_schedule)


class TestGaussianForward:
    def test_covariance_at_origin(self, cosine_schedule, rng):
        n, t = 100_000, 50
        x0 = np.zeros((n, 2))
        batch = diffuse(ForwardKind.GAUSSIAN, x0, np.full(n, t), cosine_schedule, rng)
        expected = 1.0 - cosine_schedule.alpha_bar[t]
        cov = np.cov(batch.xt.T)
        se = expected * np.sqrt(2.0 / n)
        assert abs(cov[0, 0] - expected) < 4 * se
        assert abs(cov[1, 1] - expected) < 4 * se
        assert abs(cov[0, 1]) < 4 * expected / np.sqrt(n)

    def test_markov_chain_matches_closed_form(self, cosine_schedule, rng):
        n, t = 10_000, 99
        x0 = np.tile([1.0, -2.0], (n, 1))
        chained = diffuse_chain(x0, t, cosine_schedule, rng)
        direct = diffuse(ForwardKind.GAUSSIAN, x0, np.full(n, t), cosine_schedule, rng).xt

        ab = cosine_schedule.alpha_bar[t]
        mean = np.sqrt(ab) * x0[0]
        var = 1.0 - ab
        for draws in (chained, direct):
            assert np.all(np.abs(draws.mean(axis=0) - mean) < 4 * np.sqrt(var / n))
            assert np.all(np.abs(draws.var(axis=0) - var) < 4 * var * np.sqrt(2.0 / n))


class TestInverseNormalCdf:
    def test_median(self):
        assert inverse_normal_cdf(0.5) == 0.0

    def test_upper_quantile(self):
        assert inverse_normal_cdf(0.975) == pytest.approx(1.959963984540054, abs=1e-6)

    def test_inverts_normal_cdf(self):
        u = np.logspace(-6, np.log10(0.5), 200)
        u = np.concatenate([u, 1.0 - u])
        np.testing.assert_allclose(special.ndtr(inverse_normal_cdf(u)), u, rtol=1e-9, atol=1e-15)

    def test_matches_scipy_quantile(self):
        u = np.linspace(1e-6, 1 - 1e-6, 1001)
        np.testing.assert_allclose(inverse_normal_cdf(u), stats.norm.ppf(u), atol=1e-9)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.5, 1.5])
    def test_rejects_values_outside_unit_interval(self, u):
        with pytest.raises(UsageError):
            inverse_normal_cdf(u)


class TestDeterministicForward:
    def test_half_fraction_maps_to_zero(self):
        assert digit_fraction(np.array([0.05]), 0)[0] == 0.5
        assert deterministic_eps(np.array([[0.05, -0.05]]), 0)[0].tolist() == [0.0, 0.0]

    def test_digit_window(self):
        x0 = np.array([[3.14159, 3.14159]])
        u = digit_fraction(x0, 0)
        np.testing.assert_allclose(u, [[0.4159, 0.4159]], atol=1e-9)
        np.testing.assert_allclose(deterministic_eps(x0, 0), stats.norm.ppf(u), atol=1e-9)

    def test_window_cycles_every_six_steps(self):
        x0 = np.array([[1.234567, 7.654321]])
        np.testing.assert_array_equal(deterministic_eps(x0, 2), deterministic_eps(x0, 8))

    def test_fraction_is_clamped(self):
        u = digit_fraction(np.array([[2.0, 0.0]]), 3)
        np.testing.assert_array_equal(u, [[1e-6, 1e-6]])

    def test_same_input_same_output(self, small_dataset, cosine_schedule):
        t = np.arange(len(small_dataset)) % 100
        first = diffuse(ForwardKind.DETERMINISTIC, small_dataset.points, t, cosine_schedule)
        second = diffuse(ForwardKind.DETERMINISTIC, small_dataset.points, t, cosine_schedule)
        np.testing.assert_array_equal(first.xt, second.xt)

    def test_final_step_noise_looks_normal(self, target):
        points = sample(target, 10_000, seed=0).points
        eps = deterministic_eps(points, 99).ravel()
        assert stats.kstest(eps, "norm").statistic < 0.03


class TestForwardTrajectory:
    def test_frame_layout(self, tmp_path, small_dataset, cosine_schedule):
        steps = [0, 27, 54, 81, 99]
        frame = forward_trajectory(small_dataset, cosine_schedule, ForwardKind.GAUSSIAN, steps, seed=0)
        assert list(frame.columns) == ["t", "x", "y", "cluster"]
        assert len(frame) == len(steps) * len(small_dataset)
        assert sorted(frame["t"].unique()) == steps

        path = dump_forward_trajectory(frame, tmp_path / "forward.csv")
        assert len(pd.read_csv(path)) == len(frame)

    def test_reproducible_per_seed(self, small_dataset, cosine_schedule):
        first = forward_trajectory(small_dataset, cosine_schedule, ForwardKind.GAUSSIAN, [10, 90], seed=4)
        second = forward_trajectory(small_dataset, cosine_schedule, ForwardKind.GAUSSIAN, [10, 90], seed=4)
        pd.testing.assert_frame_equal(first, second)
