"""
Sample Quality Metrics

Scores generated samples against the ground-truth mixture:
- Energy distance to a reference sample (exact pairwise sums)
- Mean log-likelihood under the true density
- Mode fractions and per-mode spread from nearest-mean assignment
- Positional bias: agreement of nearest-mean labels at the first and last
  trajectory snapshots

Also exports the learned function on a grid for vector-field figures.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist

from src.config.settings import settings
from src.diffusion.sample import Predictor, ScoreOracle, Trajectory
from src.diffusion.schedule import Schedule
from src.diffusion.target import GmmTarget, diffuse_target, log_density
from src.diffusion.train import Objective
from src.errors import NumericalError, UsageError

logger = structlog.get_logger(__name__)


class MetricsReport(BaseModel):
    """Evaluation summary written as JSON."""

    energy_distance: float = Field(ge=0.0)
    mean_log_likelihood: float
    mode_fractions: list[float]
    per_mode_std: list[list[float]]
    positional_bias: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    n_samples: int
    n_reference: int


class GridSpec(BaseModel):
    """Square evaluation lattice over [-limit, limit]^2."""

    limit: float = Field(default_factory=lambda: settings.grid_limit, gt=0, le=7.0)
    points_per_axis: int = Field(default=21, ge=2)

    def points(self) -> np.ndarray:
        axis = np.linspace(-self.limit, self.limit, self.points_per_axis)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])


@dataclass
class ModeAssignment:
    labels: np.ndarray
    fractions: np.ndarray
    per_mode_std: np.ndarray


def _as_samples(samples: np.ndarray, name: str) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2 or samples.shape[0] == 0:
        raise UsageError(f"{name} must be a non-empty (N, dim) array")
    return samples


def mean_pairwise_distance(a: np.ndarray, b: np.ndarray, block_size: Optional[int] = None) -> float:
    """Mean Euclidean distance over all (a_i, b_j) pairs, in fixed row blocks."""
    block_size = block_size or settings.energy_block_size
    total = 0.0
    for start in range(0, a.shape[0], block_size):
        total += float(cdist(a[start:start + block_size], b).sum())
    return total / (a.shape[0] * b.shape[0])


def _canonical_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    key_a = (a.shape[0], a.tobytes())
    key_b = (b.shape[0], b.tobytes())
    return (a, b) if key_a <= key_b else (b, a)


def energy_distance(
    samples_a: np.ndarray, samples_b: np.ndarray, block_size: Optional[int] = None
) -> float:
    """
    2 E|a - b| - E|a - a'| - E|b - b'| over all pairs (diagonal included).

    Symmetric bitwise: the cross term is always summed in the same orientation.
    """
    a = _as_samples(samples_a, "samples_a")
    b = _as_samples(samples_b, "samples_b")
    first, second = _canonical_pair(a, b)
    cross = mean_pairwise_distance(first, second, block_size)
    within = mean_pairwise_distance(a, a, block_size) + mean_pairwise_distance(b, b, block_size)
    return max(0.0, 2.0 * cross - within)


def assign_modes(samples: np.ndarray, target: GmmTarget) -> ModeAssignment:
    """
    Label each sample with its nearest true mean; ties go to the lowest index.

    Per-mode standard deviations are per coordinate (population form), zero
    for a mode with no samples.
    """
    samples = _as_samples(samples, "samples")
    means = target.means
    labels = np.argmin(cdist(samples, means), axis=1)
    fractions = np.bincount(labels, minlength=len(means)) / samples.shape[0]
    per_mode_std = np.zeros_like(means)
    for k in range(len(means)):
        members = samples[labels == k]
        if members.shape[0]:
            per_mode_std[k] = members.std(axis=0)
    return ModeAssignment(labels=labels, fractions=fractions, per_mode_std=per_mode_std)


def positional_bias(trajectory: Trajectory, target: GmmTarget) -> float:
    """
    Fraction of particles whose nearest mean is the same at the first
    snapshot and after the final step. 0.5 means no bias for two modes.
    """
    if len(trajectory.steps) < 2:
        raise UsageError("Positional bias needs at least two snapshots")
    start = assign_modes(trajectory.first, target).labels
    end = assign_modes(trajectory.final, target).labels
    return float(np.mean(start == end))


def mean_log_likelihood(samples: np.ndarray, target: GmmTarget) -> float:
    return float(np.mean(log_density(target, _as_samples(samples, "samples"))))


def evaluate(
    samples: np.ndarray,
    target: GmmTarget,
    reference: np.ndarray,
    trajectory: Optional[Trajectory] = None,
) -> MetricsReport:
    """
    Full metrics report for one set of generated samples.

    Raises:
        NumericalError: If any sample or reference point is non-finite
    """
    samples = _as_samples(samples, "samples")
    reference = _as_samples(reference, "reference")
    for name, points in (("samples", samples), ("reference", reference)):
        bad = int(np.sum(~np.isfinite(points).all(axis=1)))
        if bad:
            raise NumericalError(f"{bad} of {points.shape[0]} {name} rows are non-finite")

    modes = assign_modes(samples, target)
    report = MetricsReport(
        energy_distance=energy_distance(samples, reference),
        mean_log_likelihood=mean_log_likelihood(samples, target),
        mode_fractions=modes.fractions.tolist(),
        per_mode_std=modes.per_mode_std.tolist(),
        positional_bias=positional_bias(trajectory, target) if trajectory is not None else None,
        n_samples=samples.shape[0],
        n_reference=reference.shape[0],
    )
    logger.info(
        "evaluation_completed",
        energy_distance=report.energy_distance,
        mode_fractions=report.mode_fractions,
        positional_bias=report.positional_bias,
    )
    return report


def vector_field_frame(
    model: Predictor,
    schedule: Schedule,
    t_list: Sequence[int],
    grid_spec: GridSpec,
) -> pd.DataFrame:
    """
    Model output (u, v) at every grid point for each step.

    Noise models also get the implied score columns
    (score_u, score_v) = -output / sqrt(1 - alpha_bar_t). The exact oracle
    adds the diffused mixture's log_density and density at each point.
    """
    grid = grid_spec.points()
    frames = []
    for t in t_list:
        schedule.check_step(t)
        output = model(grid, int(t))
        columns = {
            "t": np.full(grid.shape[0], int(t)),
            "x": grid[:, 0],
            "y": grid[:, 1],
            "u": output[:, 0],
            "v": output[:, 1],
        }
        if Objective(model.objective) is Objective.NOISE:
            implied = -output / np.sqrt(1.0 - schedule.alpha_bar[t])
            columns["score_u"] = implied[:, 0]
            columns["score_v"] = implied[:, 1]
        if isinstance(model, ScoreOracle):
            diffused = diffuse_target(model.target, float(schedule.alpha_bar[t]))
            columns["log_density"] = log_density(diffused, grid)
            columns["density"] = np.exp(columns["log_density"])
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def export_vector_field(
    model: Predictor,
    schedule: Schedule,
    t_list: Sequence[int],
    grid_spec: GridSpec,
    path: Path,
) -> Path:
    """Write vector_field_frame as CSV."""
    path = Path(path)
    vector_field_frame(model, schedule, t_list, grid_spec).to_csv(path, index=False)
    logger.debug("vector_field_exported", path=str(path), steps=list(t_list))
    return path
