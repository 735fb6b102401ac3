"""
Regression Network

Fixed 3 -> 20 -> 20 -> out multi-layer perceptron (two ReLU layers and a
linear head) with hand-written forward and reverse passes. The input is
(x, y, t/T); the head is 2-wide for the continuous objectives and 2*d-wide
for the categorical demo.

Conventions:
- ReLU derivative at exactly 0 is 0
- Weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)), biases zero
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import structlog

from src.errors import CheckpointError

logger = structlog.get_logger(__name__)

INPUT_DIM = 3
HIDDEN_DIM = 20
OUTPUT_DIM = 2
PARAMETER_ORDER = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class Mlp:
    """Network parameters, one array per layer."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @property
    def output_dim(self) -> int:
        return int(self.W3.shape[0])

    @property
    def parameter_count(self) -> int:
        return sum(getattr(self, name).size for name in PARAMETER_ORDER)

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, name) for name in PARAMETER_ORDER]

    def flatten(self) -> np.ndarray:
        """All parameters in fixed layer order W1, b1, W2, b2, W3, b3."""
        return np.concatenate([a.ravel() for a in self.arrays()])

    def unflatten(self, vector: np.ndarray) -> "Mlp":
        """New instance of the same shapes filled from a flat vector."""
        vector = np.asarray(vector, dtype=np.float64)
        if vector.size != self.parameter_count:
            raise CheckpointError(
                f"Expected {self.parameter_count} parameters, got {vector.size}"
            )
        parts, offset = {}, 0
        for name in PARAMETER_ORDER:
            shape = getattr(self, name).shape
            size = int(np.prod(shape))
            parts[name] = vector[offset:offset + size].reshape(shape).copy()
            offset += size
        return type(self)(**parts)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def shape_spec(self) -> dict[str, list[int]]:
        return {name: list(getattr(self, name).shape) for name in PARAMETER_ORDER}


class Gradients(Mlp):
    """Gradient of a scalar loss, shape-congruent with Mlp."""

    pass


@dataclass
class ForwardCache:
    """Intermediate activations needed for the reverse pass."""

    inputs: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    output: np.ndarray


def init_mlp(seed: int, output_dim: int = OUTPUT_DIM) -> Mlp:
    """Uniform fan-in initialisation with zero biases; reproducible per seed."""
    rng = np.random.default_rng(seed)

    def layer(fan_out: int, fan_in: int) -> np.ndarray:
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=(fan_out, fan_in))

    return Mlp(
        W1=layer(HIDDEN_DIM, INPUT_DIM),
        b1=np.zeros(HIDDEN_DIM),
        W2=layer(HIDDEN_DIM, HIDDEN_DIM),
        b2=np.zeros(HIDDEN_DIM),
        W3=layer(output_dim, HIDDEN_DIM),
        b3=np.zeros(output_dim),
    )


def zeros_like(mlp: Mlp) -> Gradients:
    return Gradients(**{name: np.zeros_like(getattr(mlp, name)) for name in PARAMETER_ORDER})


def build_inputs(x: np.ndarray, t_norm: np.ndarray | float) -> np.ndarray:
    """Stack points (B, 2) with normalised time (B,) or scalar into (B, 3)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t_col = np.broadcast_to(np.asarray(t_norm, dtype=np.float64), (x.shape[0],))
    return np.column_stack([x, t_col])


def forward_with_cache(mlp: Mlp, inputs: np.ndarray) -> ForwardCache:
    """Evaluate the network on a (B, 3) input batch keeping activations."""
    z1 = inputs @ mlp.W1.T + mlp.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ mlp.W2.T + mlp.b2
    h2 = np.maximum(z2, 0.0)
    output = h2 @ mlp.W3.T + mlp.b3
    return ForwardCache(inputs=inputs, z1=z1, h1=h1, z2=z2, h2=h2, output=output)


def forward(mlp: Mlp, x: np.ndarray, t_norm: np.ndarray | float) -> np.ndarray:
    """y = W3 relu(W2 relu(W1 [x; t_norm] + b1) + b2) + b3 for a batch of points."""
    return forward_with_cache(mlp, build_inputs(x, t_norm)).output


def backprop(mlp: Mlp, cache: ForwardCache, output_grad: np.ndarray) -> Gradients:
    """Reverse accumulation from dLoss/dOutput (B, out) to parameter gradients."""
    dW3 = output_grad.T @ cache.h2
    db3 = output_grad.sum(axis=0)
    dz2 = (output_grad @ mlp.W3) * (cache.z2 > 0.0)
    dW2 = dz2.T @ cache.h1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ mlp.W2) * (cache.z1 > 0.0)
    dW1 = dz1.T @ cache.inputs
    db1 = dz1.sum(axis=0)
    return Gradients(W1=dW1, b1=db1, W2=dW2, b2=db2, W3=dW3, b3=db3)


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> float:
    """Mean over batch and output dimensions of the squared error."""
    return float(np.mean((prediction - target) ** 2))


def backward(mlp: Mlp, inputs: np.ndarray, targets: np.ndarray) -> tuple[float, Gradients]:
    """
    Mean squared error and its exact gradients.

    Args:
        mlp: Network parameters
        inputs: (B, 3) network inputs
        targets: (B, out) regression targets

    Returns:
        Tuple of (loss, gradients)
    """
    if inputs.shape[0] == 0:
        raise ValueError("Batch must be non-empty")
    cache = forward_with_cache(mlp, inputs)
    residual = cache.output - targets
    loss = float(np.mean(residual ** 2))
    output_grad = 2.0 * residual / residual.size
    return loss, backprop(mlp, cache, output_grad)


# ─────────────────────────────────────────────────────────────
# Checkpoints
# ─────────────────────────────────────────────────────────────

def save_checkpoint(
    mlp: Mlp,
    path: Path,
    objective: str,
    metadata: Optional[dict[str, Any]] = None,
) -> Path:
    """
    Write a JSON checkpoint: architecture header, objective and the flat
    parameter vector in fixed layer order.
    """
    path = Path(path)
    payload = {
        "architecture": {
            "input_dim": INPUT_DIM,
            "hidden": [HIDDEN_DIM, HIDDEN_DIM],
            "output_dim": mlp.output_dim,
            "shapes": mlp.shape_spec(),
            "parameter_count": mlp.parameter_count,
        },
        "objective": objective,
        "metadata": metadata or {},
        "parameters": mlp.flatten().tolist(),
    }
    path.write_text(json.dumps(payload, indent=1, sort_keys=True))
    logger.debug("checkpoint_saved", path=str(path), objective=objective)
    return path


def load_checkpoint(path: Path) -> tuple[Mlp, str, dict[str, Any]]:
    """
    Read a checkpoint written by save_checkpoint.

    Returns:
        Tuple of (mlp, objective, metadata)

    Raises:
        CheckpointError: Missing file or architecture mismatch
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    payload = json.loads(path.read_text())
    arch = payload.get("architecture", {})
    output_dim = int(arch.get("output_dim", OUTPUT_DIM))
    template = init_mlp(0, output_dim=output_dim)
    if (
        arch.get("input_dim") != INPUT_DIM
        or arch.get("hidden") != [HIDDEN_DIM, HIDDEN_DIM]
        or arch.get("shapes") != template.shape_spec()
    ):
        raise CheckpointError(f"Checkpoint architecture does not match the network: {arch}")
    mlp = template.unflatten(np.array(payload["parameters"], dtype=np.float64))
    return mlp, payload["objective"], payload.get("metadata", {})
