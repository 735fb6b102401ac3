"""Network forward pass, exact gradients and checkpoints."""

import json

import numpy as np
import pytest

from src.diffusion.net import (
    HIDDEN_DIM,
    Mlp,
    backward,
    build_inputs,
    forward,
    forward_with_cache,
    init_mlp,
    load_checkpoint,
    save_checkpoint,
)
from src.errors import CheckpointError, InputMissingError


def _relu_reference(mlp: Mlp, inputs: np.ndarray) -> np.ndarray:
    """Straight-line evaluation, one item and one unit at a time."""
    out = np.zeros((inputs.shape[0], mlp.output_dim))
    for n, row in enumerate(inputs):
        h1 = [max(0.0, sum(mlp.W1[i, j] * row[j] for j in range(3)) + mlp.b1[i]) for i in range(HIDDEN_DIM)]
        h2 = [
            max(0.0, sum(mlp.W2[i, j] * h1[j] for j in range(HIDDEN_DIM)) + mlp.b2[i])
            for i in range(HIDDEN_DIM)
        ]
        for k in range(mlp.output_dim):
            out[n, k] = sum(mlp.W3[k, j] * h2[j] for j in range(HIDDEN_DIM)) + mlp.b3[k]
    return out


def _pattern(mlp: Mlp, inputs: np.ndarray) -> np.ndarray:
    cache = forward_with_cache(mlp, inputs)
    return np.concatenate([(cache.z1 > 0).ravel(), (cache.z2 > 0).ravel()])


def _random_batch(seed: int, size: int = 8) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    inputs = build_inputs(rng.normal(scale=3.0, size=(size, 2)), rng.uniform(size=size))
    targets = rng.standard_normal((size, 2))
    return inputs, targets


class TestInitialisation:
    def test_shapes_and_count(self):
        mlp = init_mlp(0)
        assert mlp.parameter_count == 542
        assert mlp.W1.shape == (20, 3)
        assert mlp.W3.shape == (2, 20)

    def test_bounds_and_zero_biases(self):
        mlp = init_mlp(5)
        assert np.all(np.abs(mlp.W1) <= np.sqrt(1 / 3))
        assert np.all(np.abs(mlp.W2) <= np.sqrt(1 / 20))
        for bias in (mlp.b1, mlp.b2, mlp.b3):
            np.testing.assert_array_equal(bias, 0.0)

    def test_reproducible_per_seed(self):
        np.testing.assert_array_equal(init_mlp(3).flatten(), init_mlp(3).flatten())
        assert not np.array_equal(init_mlp(3).flatten(), init_mlp(4).flatten())

    def test_output_dim(self):
        assert init_mlp(0, output_dim=16).parameter_count == 20 * 3 + 20 + 20 * 20 + 20 + 16 * 20 + 16


class TestForward:
    def test_zero_parameters_give_zero_output(self):
        mlp = init_mlp(0).unflatten(np.zeros(542))
        np.testing.assert_array_equal(forward(mlp, np.ones((4, 2)), 0.5), 0.0)

    def test_reduces_to_linear_map_when_units_stay_active(self):
        rng = np.random.default_rng(0)
        W1 = rng.uniform(-0.5, 0.5, size=(HIDDEN_DIM, 3))
        M = rng.standard_normal((2, HIDDEN_DIM))
        offset = 10.0
        mlp = Mlp(
            W1=W1,
            b1=np.full(HIDDEN_DIM, offset),
            W2=np.eye(HIDDEN_DIM),
            b2=np.zeros(HIDDEN_DIM),
            W3=M,
            b3=-M @ np.full(HIDDEN_DIM, offset),
        )
        x = rng.uniform(-1, 1, size=(16, 2))
        inputs = build_inputs(x, 0.3)
        np.testing.assert_allclose(forward(mlp, x, 0.3), inputs @ (M @ W1).T, atol=1e-11)

    def test_matches_straight_line_evaluation(self):
        mlp = init_mlp(9)
        inputs, _ = _random_batch(1, size=5)
        np.testing.assert_allclose(
            forward_with_cache(mlp, inputs).output, _relu_reference(mlp, inputs), atol=1e-12
        )

    def test_piecewise_linear_between_kinks(self):
        mlp = init_mlp(2)
        rng = np.random.default_rng(4)
        x = rng.normal(size=(1, 2))
        direction = rng.normal(size=(1, 2))
        a = 1e-4
        points = [build_inputs(x + k * a * direction, 0.5) for k in range(3)]
        patterns = [_pattern(mlp, p) for p in points]
        if not all(np.array_equal(patterns[0], p) for p in patterns):
            pytest.skip("direction crosses a kink")
        f0, f1, f2 = (forward_with_cache(mlp, p).output for p in points)
        np.testing.assert_allclose(f2 - 2 * f1 + f0, 0.0, atol=1e-12)


class TestBackward:
    def test_zero_residual(self):
        mlp = init_mlp(0)
        inputs, _ = _random_batch(0)
        loss, grads = backward(mlp, inputs, forward_with_cache(mlp, inputs).output)
        assert loss == 0.0
        np.testing.assert_array_equal(grads.flatten(), 0.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_central_differences(self, seed):
        mlp = init_mlp(seed)
        inputs, targets = _random_batch(100 + seed)
        _, grads = backward(mlp, inputs, targets)
        analytic = grads.flatten()
        params = mlp.flatten()
        base_pattern = _pattern(mlp, inputs)
        h = 1e-6

        checked = 0
        for i in range(params.size):
            step = np.zeros_like(params)
            step[i] = h
            plus, minus = mlp.unflatten(params + step), mlp.unflatten(params - step)
            if not (
                np.array_equal(_pattern(plus, inputs), base_pattern)
                and np.array_equal(_pattern(minus, inputs), base_pattern)
            ):
                continue
            loss_plus, _ = backward(plus, inputs, targets)
            loss_minus, _ = backward(minus, inputs, targets)
            numeric = (loss_plus - loss_minus) / (2 * h)
            assert numeric == pytest.approx(analytic[i], rel=1e-4, abs=1e-7)
            checked += 1
        assert checked > 500

    def test_duplicated_batch_gives_same_gradients(self):
        mlp = init_mlp(1)
        inputs, targets = _random_batch(2, size=1)
        loss_one, grads_one = backward(mlp, inputs, targets)
        loss_two, grads_two = backward(mlp, np.repeat(inputs, 2, axis=0), np.repeat(targets, 2, axis=0))
        assert loss_two == pytest.approx(loss_one, rel=1e-14)
        np.testing.assert_allclose(grads_two.flatten(), grads_one.flatten(), rtol=1e-12, atol=1e-15)

    def test_rejects_empty_batch(self):
        with pytest.raises(ValueError):
            backward(init_mlp(0), np.zeros((0, 3)), np.zeros((0, 2)))


class TestParameters:
    def test_flatten_round_trip(self):
        mlp = init_mlp(6)
        restored = mlp.unflatten(mlp.flatten())
        np.testing.assert_array_equal(restored.W2, mlp.W2)
        np.testing.assert_array_equal(restored.flatten(), mlp.flatten())

    def test_unflatten_checks_size(self):
        with pytest.raises(CheckpointError):
            init_mlp(0).unflatten(np.zeros(541))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        mlp = init_mlp(8)
        path = save_checkpoint(mlp, tmp_path / "checkpoint.json", "whole", {"note": "x"})
        loaded, objective, metadata = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.flatten(), mlp.flatten())
        assert objective == "whole"
        assert metadata == {"note": "x"}

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError) as info:
            load_checkpoint(tmp_path / "missing.json")
        assert isinstance(info.value, InputMissingError)
        assert info.value.exit_code == 3

    def test_architecture_mismatch(self, tmp_path):
        path = save_checkpoint(init_mlp(0), tmp_path / "checkpoint.json", "noise")
        payload = json.loads(path.read_text())
        payload["architecture"]["hidden"] = [32, 32]
        path.write_text(json.dumps(payload))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
