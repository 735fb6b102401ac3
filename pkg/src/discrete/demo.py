"""
Categorical Diffusion Demo

Quantises the 2-D mixture dataset into d bins per axis and treats the two
axes as independent categorical variables (group A = x bin, group B = y bin).
The regression network is reused with a 2*d logit head and one softmax per
group, trained with the lambda-weighted cross-entropy on p(x_0 | x_t), then
sampled with the marginalised reverse step.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
import structlog
from pydantic import BaseModel, Field
from scipy.special import softmax

from src.config.settings import settings
from src.diffusion.net import Mlp, backprop, build_inputs, forward_with_cache, init_mlp
from src.diffusion.schedule import ScheduleKind, make_schedule
from src.diffusion.train import AdamState, adam_step
from src.discrete.chain import (
    GroupedSample,
    TransitionChain,
    build_chain,
    dump_chain,
    forward_sample,
    grouped_cross_entropy,
    histogram,
    one_hot,
    quantize,
    reverse_sample,
    sample_categorical,
    terminal_distribution,
    total_variation,
)
from src.errors import NumericalError, UsageError

logger = structlog.get_logger(__name__)


class ChainKind(str, Enum):
    UNIFORM = "uniform"
    MARGINAL = "marginal"


class DiscreteConfig(BaseModel):
    """Demo configuration; small enough for exact enumeration checks."""

    d: int = Field(default=8, ge=2, le=8)
    T: int = Field(default=10, ge=1, le=20)
    chain: ChainKind = ChainKind.MARGINAL
    schedule: ScheduleKind = ScheduleKind.COSINE
    lam: float = Field(default_factory=lambda: settings.discrete_lambda, ge=0)
    epochs: int = Field(default_factory=lambda: settings.discrete_epochs, ge=1)
    batch_size: int = Field(default_factory=lambda: settings.batch_size, ge=1)
    learning_rate: float = Field(default_factory=lambda: settings.discrete_learning_rate, gt=0)
    samples: int = Field(default=2000, ge=1)
    limit: float = Field(default_factory=lambda: settings.grid_limit, gt=0)
    seed: int = Field(default=0, ge=0)


@dataclass
class DiscreteDemoResult:
    """Trained categorical predictor, generated states and the run metrics."""

    config: DiscreteConfig
    chain: TransitionChain
    mlp: Mlp
    generated: np.ndarray
    epoch_losses: list[float]
    metrics: dict[str, Any]

    def dump_chain(self, path: Path) -> Path:
        return dump_chain(self.chain, path)


def state_inputs(states: np.ndarray, d: int, t: np.ndarray | int, T: int) -> np.ndarray:
    """Network inputs: bin indices scaled to [-1, 1] plus t / T."""
    scaled = 2.0 * np.asarray(states, dtype=np.float64) / (d - 1) - 1.0
    return build_inputs(scaled, np.asarray(t, dtype=np.float64) / T)


def predict_p0(mlp: Mlp, states: np.ndarray, t: np.ndarray | int, d: int, T: int) -> tuple[np.ndarray, np.ndarray]:
    """p(x_0 | x_t) for both groups, each (N, d)."""
    logits = forward_with_cache(mlp, state_inputs(states, d, t, T)).output
    return softmax(logits[:, :d], axis=-1), softmax(logits[:, d:], axis=-1)


def _batch_step(
    mlp: Mlp,
    x0: np.ndarray,
    xt: np.ndarray,
    t: np.ndarray,
    config: DiscreteConfig,
) -> tuple[float, np.ndarray]:
    """Mean grouped cross-entropy of a batch and the flat parameter gradient."""
    d = config.d
    cache = forward_with_cache(mlp, state_inputs(xt, d, t, config.T))
    p_a = softmax(cache.output[:, :d], axis=-1)
    p_b = softmax(cache.output[:, d:], axis=-1)
    truth = GroupedSample(one_hot(x0[:, 0], d), one_hot(x0[:, 1], d), config.lam)
    n = x0.shape[0]
    loss = grouped_cross_entropy(p_a, p_b, truth) / n
    output_grad = np.concatenate(
        [(p_a - truth.group_a) / n, config.lam * (p_b - truth.group_b) / n], axis=1
    )
    return loss, backprop(mlp, cache, output_grad).flatten()


def train_categorical(
    states: np.ndarray, chain: TransitionChain, config: DiscreteConfig, rng: np.random.Generator
) -> tuple[Mlp, list[float]]:
    """Adam on the grouped cross-entropy over uniformly drawn steps."""
    mlp = init_mlp(config.seed, output_dim=2 * config.d)
    params = mlp.flatten()
    state = AdamState.fresh(params.size, lr=config.learning_rate)
    n = states.shape[0]
    epoch_losses: list[float] = []

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            x0 = states[order[start:start + config.batch_size]]
            t = rng.integers(0, config.T, size=x0.shape[0])
            xt = np.column_stack(
                [forward_sample(x0[:, axis], chain, t, rng) for axis in range(2)]
            )
            loss, grads = _batch_step(mlp, x0, xt, t, config)
            if not np.isfinite(loss):
                raise NumericalError(f"Non-finite cross-entropy at epoch {epoch + 1}")
            params, state = adam_step(params, grads, state)
            mlp = mlp.unflatten(params)
            losses.append(loss)
        epoch_losses.append(float(np.mean(losses)))
        logger.debug("discrete_epoch_completed", epoch=epoch + 1, mean_loss=epoch_losses[-1])
    return mlp, epoch_losses


def discrete_demo_run(config: DiscreteConfig, states: np.ndarray) -> DiscreteDemoResult:
    """
    Train and sample the categorical demo on integer states of shape (N, 2).

    Metrics: per-axis total-variation distance between generated and training
    class marginals, their mean, and the loss trace.
    """
    states = np.asarray(states, dtype=np.int64)
    if states.ndim != 2 or states.shape[1] != 2 or states.shape[0] == 0:
        raise UsageError("Demo states must be a non-empty (N, 2) integer array")
    d = config.d
    if np.any((states < 0) | (states >= d)):
        raise UsageError(f"Demo states must lie in [0, {d})")

    log = logger.bind(chain=config.chain.value, d=d, T=config.T, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    schedule = make_schedule(config.schedule, config.T)
    marginals = [histogram(states[:, axis], d) for axis in range(2)]
    # the chain corrupts towards the pooled class marginals of both axes
    pooled = histogram(states, d)
    chain = build_chain(config.chain.value, d, schedule, pooled)

    log.info("discrete_demo_started", n=states.shape[0])
    mlp, epoch_losses = train_categorical(states, chain, config, rng)

    prior = terminal_distribution(chain, pooled)
    terminal = sample_categorical(np.broadcast_to(prior, (config.samples, 2, d)), rng)

    def predict(xt: np.ndarray, t: int) -> np.ndarray:
        return np.stack(predict_p0(mlp, xt, t, d, config.T), axis=1)

    generated = reverse_sample(chain, predict, terminal, rng)

    tv = [total_variation(histogram(generated[:, axis], d), marginals[axis]) for axis in range(2)]
    metrics = {
        "chain": config.chain.value,
        "d": d,
        "T": config.T,
        "seed": config.seed,
        "lambda": config.lam,
        "tv_x": tv[0],
        "tv_y": tv[1],
        "tv_mean": float(np.mean(tv)),
        "loss_trace": epoch_losses,
    }
    log.info("discrete_demo_completed", tv_mean=metrics["tv_mean"], final_loss=epoch_losses[-1])
    return DiscreteDemoResult(
        config=config,
        chain=chain,
        mlp=mlp,
        generated=generated,
        epoch_losses=epoch_losses,
        metrics=metrics,
    )


def demo_states(points: np.ndarray, config: DiscreteConfig, max_points: Optional[int] = None) -> np.ndarray:
    """Quantised training states from continuous points."""
    states = quantize(points, config.d, config.limit)
    return states if max_points is None else states[:max_points]
