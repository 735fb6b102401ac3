"""
Training

Adam optimiser and the three regression objectives over the forward
diffusion stream:
- noise:  predict eps
- whole:  predict the clean point x_0
- single: predict the posterior mean of x_{t-1} given (x_t, x_0)

All three minimise the same mean squared error; only the target changes.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field

from src.config.settings import settings
from src.diffusion.forward import ForwardKind, NoisedBatch, diffuse
from src.diffusion.net import Mlp, backward, build_inputs, init_mlp
from src.diffusion.schedule import Schedule, ScheduleKind, make_schedule
from src.diffusion.target import Dataset
from src.errors import NumericalError, UsageError

logger = structlog.get_logger(__name__)


class Objective(str, Enum):
    """Regression target of a network; also names the matching sampler."""

    NOISE = "noise"
    WHOLE_STEP = "whole"
    SINGLE_STEP = "single"


@dataclass
class AdamState:
    """First/second moment accumulators and hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def fresh(cls, size: int, lr: float = 1e-3, **kwargs: Any) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), lr=lr, **kwargs)


class TrainConfig(BaseModel):
    """Experiment configuration; defaults match the reference run."""

    model_config = ConfigDict(use_enum_values=False)

    batch_size: int = Field(default_factory=lambda: settings.batch_size, ge=1)
    epochs: int = Field(default_factory=lambda: settings.epochs, ge=1)
    T: int = Field(default_factory=lambda: settings.default_steps, ge=1)
    schedule: ScheduleKind = ScheduleKind.COSINE
    forward: ForwardKind = ForwardKind.GAUSSIAN
    objective: Objective = Objective.NOISE
    seed: int = Field(default=0, ge=0)
    learning_rate: float = Field(default_factory=lambda: settings.learning_rate, gt=0)

    def build_schedule(self) -> Schedule:
        return make_schedule(self.schedule, self.T)


@dataclass
class TrainResult:
    """Trained network with its loss trace."""

    mlp: Mlp
    epoch_losses: list[float]
    optimizer_steps: int
    config: TrainConfig
    schedule: Schedule = field(repr=False)

    def loss_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"epoch": np.arange(1, len(self.epoch_losses) + 1), "mean_loss": self.epoch_losses}
        )

    def dump_losses(self, path: Path) -> Path:
        path = Path(path)
        self.loss_frame().to_csv(path, index=False)
        return path


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """
    One bias-corrected Adam update.

    Returns:
        Tuple of (new_params, state); state is updated in place and returned
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise UsageError(
            f"Shape mismatch: params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (grads * grads)
    state.step_count += 1
    m_hat = state.m / (1.0 - state.beta1 ** state.step_count)
    v_hat = state.v / (1.0 - state.beta2 ** state.step_count)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_hat), state


def posterior_mean(
    x0: np.ndarray, xt: np.ndarray, t: np.ndarray, schedule: Schedule
) -> np.ndarray:
    """
    Mean of q(x_{t-1} | x_t, x_0):
        (sqrt(ab_{t-1}) beta_t x_0 + sqrt(alpha_t) (1 - ab_{t-1}) x_t) / (1 - ab_t)
    with x_0 itself at t = 0.
    """
    t = np.asarray(t, dtype=np.int64)
    ab_prev = schedule.alpha_bar_prev[t][:, None]
    beta = schedule.beta[t][:, None]
    alpha = schedule.alpha[t][:, None]
    ab = schedule.alpha_bar[t][:, None]
    mean = (np.sqrt(ab_prev) * beta * x0 + np.sqrt(alpha) * (1.0 - ab_prev) * xt) / (1.0 - ab)
    return np.where((t == 0)[:, None], x0, mean)


def make_target(objective: Objective, noised: NoisedBatch, schedule: Schedule) -> np.ndarray:
    """Regression target for a noised batch under the given objective."""
    objective = Objective(objective)
    if objective is Objective.NOISE:
        return noised.eps
    if objective is Objective.WHOLE_STEP:
        return noised.x0
    return posterior_mean(noised.x0, noised.xt, noised.t, schedule)


def sample_timesteps(rng: np.random.Generator, n: int, T: int) -> np.ndarray:
    """Uniform draws from {0, ..., T-1}."""
    return rng.integers(0, T, size=n)


def train_run(
    config: TrainConfig,
    dataset: Dataset,
    schedule: Optional[Schedule] = None,
) -> TrainResult:
    """
    Train one network with Adam.

    Each epoch shuffles the dataset and walks it in minibatches; every item
    gets its own uniform step, is diffused and regressed on make_target.
    Fully reproducible per seed.

    Raises:
        NumericalError: If the loss or any parameter becomes non-finite
    """
    if len(dataset) == 0:
        raise UsageError("Dataset must not be empty")
    schedule = schedule or config.build_schedule()
    if schedule.T != config.T:
        raise UsageError(f"Schedule has {schedule.T} steps, config expects {config.T}")

    log = logger.bind(
        objective=config.objective.value,
        forward=config.forward.value,
        schedule=schedule.kind.value,
        seed=config.seed,
    )
    rng = np.random.default_rng(config.seed)
    mlp = init_mlp(config.seed)
    params = mlp.flatten()
    state = AdamState.fresh(params.size, lr=config.learning_rate)
    n = len(dataset)
    batches_per_epoch = math.ceil(n / config.batch_size)
    epoch_losses: list[float] = []

    log.info("training_started", n=n, epochs=config.epochs, batches_per_epoch=batches_per_epoch)

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for b in range(batches_per_epoch):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            x0 = dataset.points[idx]
            t = sample_timesteps(rng, len(idx), config.T)
            noised = diffuse(config.forward, x0, t, schedule, rng)
            target = make_target(config.objective, noised, schedule)
            inputs = build_inputs(noised.xt, t / config.T)

            loss, grads = backward(mlp, inputs, target)
            if not math.isfinite(loss):
                raise NumericalError(f"Non-finite loss at epoch {epoch + 1}, batch {b}")
            params, state = adam_step(params, grads.flatten(), state)
            mlp = mlp.unflatten(params)
            if not mlp.is_finite():
                raise NumericalError(f"Non-finite parameters at epoch {epoch + 1}, batch {b}")
            losses.append(loss)

        epoch_losses.append(float(np.mean(losses)))
        log.debug("epoch_completed", epoch=epoch + 1, mean_loss=epoch_losses[-1])

    log.info(
        "training_completed",
        optimizer_steps=state.step_count,
        first_loss=epoch_losses[0],
        final_loss=epoch_losses[-1],
    )
    return TrainResult(
        mlp=mlp,
        epoch_losses=epoch_losses,
        optimizer_steps=state.step_count,
        config=config,
        schedule=schedule,
    )
