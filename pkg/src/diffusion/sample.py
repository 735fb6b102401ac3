"""
Reverse Sampling

Three ancestral samplers, one per training objective:
- noise:  x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z
- whole:  x_{t-1} = sqrt(ab_{t-1}) * x0_hat + sqrt(1 - ab_{t-1}) z
- single: x_{t-1} = mu_hat + sqrt(beta_t) z

Iteration runs t = T-1 .. 1 with noise, then a noiseless final step at t = 0.
Models are anything callable as model(x, t) with an `objective` attribute:
a trained network or the exact score oracle.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Protocol

import numpy as np
import pandas as pd
import structlog

from src.diffusion.net import Mlp, forward
from src.diffusion.schedule import Schedule
from src.diffusion.target import GmmTarget, diffused_score
from src.diffusion.train import Objective, posterior_mean
from src.errors import NumericalError, ObjectiveMismatchError, StepRangeError, UsageError

logger = structlog.get_logger(__name__)

# Samplers are named after the objective they consume
SamplerKind = Objective


class InitMode(str, Enum):
    """Initial particle layout."""

    GRID = "grid"
    GAUSSIAN = "gaussian"


class Predictor(Protocol):
    """Anything that predicts an objective's target for a batch at step t."""

    objective: Objective

    def __call__(self, x: np.ndarray, t: int) -> np.ndarray: ...


@dataclass
class NetworkPredictor:
    """Trained network evaluated at normalised time t / T."""

    mlp: Mlp
    objective: Objective
    num_steps: int

    def __call__(self, x: np.ndarray, t: int) -> np.ndarray:
        return forward(self.mlp, x, t / self.num_steps)


@dataclass
class ScoreOracle:
    """
    Exact predictions derived from the diffused-mixture score s_t(x):
    eps_hat = -sqrt(1 - ab_t) s, x0_hat = (x + (1 - ab_t) s) / sqrt(ab_t),
    mu_hat = posterior mean evaluated at x0_hat.
    """

    target: GmmTarget
    schedule: Schedule
    objective: Objective = Objective.NOISE

    def __call__(self, x: np.ndarray, t: int) -> np.ndarray:
        ab = float(self.schedule.alpha_bar[t])
        s = diffused_score(self.target, self.schedule, t, x)
        if self.objective is Objective.NOISE:
            return -np.sqrt(1.0 - ab) * s
        x0_hat = (x + (1.0 - ab) * s) / np.sqrt(ab)
        if self.objective is Objective.WHOLE_STEP:
            return x0_hat
        steps = np.full(x.shape[0], t, dtype=np.int64)
        return posterior_mean(x0_hat, x, steps, self.schedule)


@dataclass
class Trajectory:
    """Particle snapshots ordered by strictly decreasing step."""

    steps: list[int] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)

    def record(self, t: int, x: np.ndarray) -> None:
        if self.steps and t >= self.steps[-1]:
            raise UsageError(f"Snapshots must have decreasing steps, got {t} after {self.steps[-1]}")
        self.steps.append(t)
        self.positions.append(x.copy())

    @property
    def first(self) -> np.ndarray:
        return self.positions[0]

    @property
    def final(self) -> np.ndarray:
        return self.positions[-1]

    def at(self, t: int) -> np.ndarray:
        return self.positions[self.steps.index(t)]

    def to_frame(self) -> pd.DataFrame:
        frames = [
            pd.DataFrame(
                {
                    "snapshot_t": t,
                    "particle_id": np.arange(x.shape[0]),
                    "x": x[:, 0],
                    "y": x[:, 1],
                }
            )
            for t, x in zip(self.steps, self.positions)
        ]
        return pd.concat(frames, ignore_index=True)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "Trajectory":
        trajectory = cls()
        for t in sorted(frame["snapshot_t"].unique(), reverse=True):
            rows = frame[frame["snapshot_t"] == t].sort_values("particle_id")
            trajectory.record(int(t), rows[["x", "y"]].to_numpy(dtype=np.float64))
        return trajectory

    def dump(self, path: Path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path


def init_particles(mode: InitMode, n: int, seed: int, limit: float = 7.0) -> np.ndarray:
    """
    Starting particles: a uniform lattice over [-limit, limit]^2 or
    standard-normal draws.

    Raises:
        UsageError: If n is not a perfect square in grid mode
    """
    mode = InitMode(mode)
    if n <= 0:
        raise UsageError(f"Particle count must be positive, got {n}")
    if mode is InitMode.GRID:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise UsageError(f"Grid initialisation needs a perfect square, got {n}")
        axis = np.linspace(-limit, limit, side)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])
    # spawned child of seed; samplers draw from the root stream
    return np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0]).standard_normal((n, 2))


def _check_step(t: int, schedule: Schedule) -> None:
    if not 0 <= t < schedule.T:
        raise StepRangeError(f"Step {t} outside [0, {schedule.T})")


def _noise(x: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
    return np.zeros_like(x) if rng is None else rng.standard_normal(x.shape)


def step_noise(
    model: Predictor,
    x: np.ndarray,
    t: int,
    schedule: Schedule,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """eps-parametrised ancestral step; rng=None gives z = 0."""
    _check_step(t, schedule)
    beta, alpha, ab = schedule.beta[t], schedule.alpha[t], schedule.alpha_bar[t]
    eps_hat = model(x, t)
    mean = (x - beta / np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(alpha)
    return mean + np.sqrt(beta) * _noise(x, rng)


def step_wholestep(
    model: Predictor,
    x: np.ndarray,
    t: int,
    schedule: Schedule,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """Predict x_0, then re-noise it forward to level t-1 with fresh noise."""
    _check_step(t, schedule)
    ab_prev = schedule.alpha_bar_prev[t]
    x0_hat = model(x, t)
    return np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * _noise(x, rng)


def step_singlestep(
    model: Predictor,
    x: np.ndarray,
    t: int,
    schedule: Schedule,
    rng: Optional[np.random.Generator],
) -> np.ndarray:
    """Predicted posterior mean plus sqrt(beta_t) noise."""
    _check_step(t, schedule)
    return model(x, t) + np.sqrt(schedule.beta[t]) * _noise(x, rng)


STEP_FUNCTIONS = {
    Objective.NOISE: step_noise,
    Objective.WHOLE_STEP: step_wholestep,
    Objective.SINGLE_STEP: step_singlestep,
}


def final_step(model: Predictor, kind: SamplerKind, x: np.ndarray, schedule: Schedule) -> np.ndarray:
    """Noiseless step at t = 0."""
    return STEP_FUNCTIONS[SamplerKind(kind)](model, x, 0, schedule, None)


def _check_finite(x: np.ndarray, t: int, kind: SamplerKind) -> None:
    bad = int(np.sum(~np.isfinite(x).all(axis=1)))
    if bad:
        logger.error("non_finite_particles", t=t, kind=kind.value, count=bad)
        raise NumericalError(f"{bad} particles became non-finite at step {t} ({kind.value} sampler)")


def run_sampler(
    model: Predictor,
    kind: SamplerKind,
    schedule: Schedule,
    particles: np.ndarray,
    record_at: Iterable[int],
    rng: Optional[np.random.Generator],
) -> Trajectory:
    """
    Run the reverse process from t = T-1 down to 0.

    Snapshot t > 0 holds x_t (the positions entering step t); snapshot 0
    holds the output of the final noiseless step. T-1 and 0 are always
    recorded. rng=None runs every step with z = 0.

    Raises:
        ObjectiveMismatchError: If the model was trained for another sampler
        NumericalError: As soon as any particle becomes non-finite
    """
    kind = SamplerKind(kind)
    if Objective(model.objective) is not kind:
        raise ObjectiveMismatchError(
            f"Sampler '{kind.value}' cannot drive a model trained for '{Objective(model.objective).value}'"
        )
    T = schedule.T
    record = {int(t) for t in record_at if 0 <= int(t) < T} | {T - 1, 0}
    step = STEP_FUNCTIONS[kind]

    x = np.asarray(particles, dtype=np.float64).copy()
    trajectory = Trajectory()
    for t in range(T - 1, 0, -1):
        if t in record:
            trajectory.record(t, x)
        x = step(model, x, t, schedule, rng)
        _check_finite(x, t, kind)
    # with T = 1 the only snapshot is the output
    x = final_step(model, kind, x, schedule)
    _check_finite(x, 0, kind)
    trajectory.record(0, x)

    logger.debug("sampler_completed", kind=kind.value, particles=x.shape[0], snapshots=trajectory.steps)
    return trajectory
