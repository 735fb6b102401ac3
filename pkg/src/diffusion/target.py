"""
Ground Truth Mixture

Mixture of diagonal Gaussians with exact density, score and diffused-score
oracles. The default instance is the two-component 2-D target with means
(-4, -4) and (4, 4).

The diffused marginal q(x_t) of a Gaussian mixture is again a Gaussian
mixture (means sqrt(a) * mu_k, covariances a * S_k + (1 - a) I for
a = alpha_bar_t), so every score used by the samplers' oracle is exact.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog
from scipy.special import logsumexp, softmax

from src.config.settings import Settings, settings
from src.diffusion.schedule import Schedule
from src.errors import InputMissingError, TargetError

logger = structlog.get_logger(__name__)

WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component with diagonal covariance."""

    weight: float
    mean: tuple[float, ...]
    cov: tuple[float, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"weight": self.weight, "mean": list(self.mean), "cov": list(self.cov)}


@dataclass(frozen=True)
class GmmTarget:
    """Gaussian mixture with diagonal covariances."""

    components: tuple[GaussianComponent, ...]

    def __post_init__(self) -> None:
        if not self.components:
            raise TargetError("Mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > WEIGHT_TOLERANCE:
            raise TargetError(f"Mixture weights must sum to 1, got {total}")
        dims = {len(c.mean) for c in self.components} | {len(c.cov) for c in self.components}
        if len(dims) != 1:
            raise TargetError("All means and covariance diagonals must share one dimension")
        for c in self.components:
            if not 0.0 < c.weight <= 1.0:
                raise TargetError(f"Component weight must lie in (0, 1], got {c.weight}")
            if min(c.cov) <= 0.0:
                raise TargetError(f"Covariance diagonal must be positive, got {c.cov}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components], dtype=np.float64)

    @property
    def covs(self) -> np.ndarray:
        return np.array([c.cov for c in self.components], dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        return {"components": [c.to_dict() for c in self.components]}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GmmTarget":
        return cls(
            tuple(
                GaussianComponent(c["weight"], tuple(c["mean"]), tuple(c["cov"]))
                for c in data["components"]
            )
        )


@dataclass
class Dataset:
    """Training points drawn from a target, with the component each came from."""

    points: np.ndarray
    seed: int
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self) -> None:
        if self.points.ndim != 2 or self.points.shape[0] == 0:
            raise TargetError("Dataset needs a non-empty (N, dim) array of points")
        if not np.all(np.isfinite(self.points)):
            raise TargetError("Dataset points must be finite")
        if self.labels.size == 0:
            self.labels = np.full(self.points.shape[0], -1, dtype=np.int64)

    def __len__(self) -> int:
        return int(self.points.shape[0])


def default_target(config: Optional[Settings] = None) -> GmmTarget:
    """
    Equal-weight two-component target.

    The sigma diagonals are read as covariances unless sigma_is_std is set,
    in which case they are squared.
    """
    config = config or settings
    covs = [config.target_cov_1, config.target_cov_2]
    if config.sigma_is_std:
        covs = [tuple(s * s for s in cov) for cov in covs]
    return GmmTarget(
        (
            GaussianComponent(0.5, tuple(config.target_mean_1), tuple(covs[0])),
            GaussianComponent(0.5, tuple(config.target_mean_2), tuple(covs[1])),
        )
    )


def sample(target: GmmTarget, n: int, seed: int) -> Dataset:
    """
    Draw n i.i.d. points: component by weight, then a Gaussian draw.

    Reproducible per seed.
    """
    if n <= 0:
        raise TargetError(f"Sample size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(len(target.components), size=n, p=target.weights)
    noise = rng.standard_normal((n, target.means.shape[1]))
    points = target.means[labels] + np.sqrt(target.covs[labels]) * noise
    logger.debug("target_sampled", n=n, seed=seed)
    return Dataset(points=points, seed=seed, labels=labels.astype(np.int64))


def _component_log_terms(target: GmmTarget, x: np.ndarray) -> np.ndarray:
    """log w_k + log N(x; mu_k, S_k), shape (..., K)."""
    x = np.asarray(x, dtype=np.float64)[..., None, :]
    means, covs = target.means, target.covs
    dim = means.shape[1]
    quad = np.sum((x - means) ** 2 / covs, axis=-1)
    log_norm = -0.5 * (dim * np.log(2.0 * np.pi) + np.sum(np.log(covs), axis=-1))
    return np.log(target.weights) + log_norm - 0.5 * quad


def log_density(target: GmmTarget, x: np.ndarray) -> np.ndarray:
    """log sum_k w_k N(x; mu_k, S_k), max-shifted for stability. Shape x.shape[:-1]."""
    return logsumexp(_component_log_terms(target, x), axis=-1)


def responsibilities(target: GmmTarget, x: np.ndarray) -> np.ndarray:
    """Posterior component probabilities r_k(x), computed in log space."""
    return softmax(_component_log_terms(target, x), axis=-1)


def score(target: GmmTarget, x: np.ndarray) -> np.ndarray:
    """Exact gradient of log_density: sum_k r_k(x) S_k^{-1} (mu_k - x)."""
    x = np.asarray(x, dtype=np.float64)
    r = responsibilities(target, x)
    directions = (target.means - x[..., None, :]) / target.covs
    return np.sum(r[..., None] * directions, axis=-2)


def diffuse_target(target: GmmTarget, alpha_bar: float) -> GmmTarget:
    """Closed-form marginal of x_t = sqrt(a) x_0 + sqrt(1 - a) eps for a = alpha_bar."""
    root = float(np.sqrt(alpha_bar))
    return GmmTarget(
        tuple(
            GaussianComponent(
                c.weight,
                tuple(root * m for m in c.mean),
                tuple(alpha_bar * v + (1.0 - alpha_bar) for v in c.cov),
            )
            for c in target.components
        )
    )


def diffused_score(target: GmmTarget, schedule: Schedule, t: int, x: np.ndarray) -> np.ndarray:
    """Exact score of the diffused marginal q(x_t) at step t."""
    schedule.check_step(t)
    return score(diffuse_target(target, float(schedule.alpha_bar[t])), x)


def mixture_moments(target: GmmTarget) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance matrix of the mixture."""
    w, means, covs = target.weights, target.means, target.covs
    mean = w @ means
    second = sum(
        wk * (np.diag(ck) + np.outer(mk, mk)) for wk, mk, ck in zip(w, means, covs)
    )
    return mean, second - np.outer(mean, mean)


def save_dataset(dataset: Dataset, target: GmmTarget, path: Path) -> tuple[Path, Path]:
    """
    Write dataset CSV (x, y, component) and a JSON sidecar with seed, n and target.

    Returns:
        Tuple of (csv_path, sidecar_path)
    """
    path = Path(path)
    frame = pd.DataFrame(
        {"x": dataset.points[:, 0], "y": dataset.points[:, 1], "component": dataset.labels}
    )
    frame.to_csv(path, index=False)
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {"seed": dataset.seed, "n": len(dataset), "target": target.to_dict()},
            indent=2,
            sort_keys=True,
        )
    )
    return path, sidecar


def load_dataset(path: Path) -> tuple[Dataset, Optional[GmmTarget]]:
    """Read a dataset CSV and its sidecar (if present)."""
    path = Path(path)
    if not path.exists():
        raise InputMissingError(f"Dataset not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    sidecar = path.with_suffix(".json")
    meta: dict[str, Any] = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    labels = (
        frame["component"].to_numpy(dtype=np.int64)
        if "component" in frame
        else np.zeros(0, dtype=np.int64)
    )
    dataset = Dataset(
        points=frame[["x", "y"]].to_numpy(dtype=np.float64),
        seed=int(meta.get("seed", 0)),
        labels=labels,
    )
    target = GmmTarget.from_dict(meta["target"]) if "target" in meta else None
    return dataset, target
