"""
Categorical Transition Chains

Discrete-state corruption q(x_t | x_{t-1}) = x_{t-1} Q^t over d states with
closed-form marginals x_0 Qbar^t and posteriors, plus the reverse step that
marginalises a predicted distribution over x_0.

Indexing follows the continuous schedule: steps 0 .. T-1, where step 0 is
the first corruption and Qbar^{-1} is the identity.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Optional, Sequence

import numpy as np
import pandas as pd
import structlog

from src.diffusion.schedule import Schedule
from src.errors import (
    ImpossibleEvidenceError,
    ImpossiblePredictionError,
    StepRangeError,
    UsageError,
)

logger = structlog.get_logger(__name__)

STOCHASTIC_TOLERANCE = 1e-12

ReverseWeighting = Literal["joint", "posterior"]


@dataclass(frozen=True, eq=False)
class TransitionChain:
    """Row-stochastic one-step matrices Q[t] and their running products Qbar[t]."""

    Q: np.ndarray
    Qbar: np.ndarray = field(repr=False)
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.Q.ndim != 3 or self.Q.shape[1] != self.Q.shape[2]:
            raise UsageError(f"Transition matrices must have shape (T, d, d), got {self.Q.shape}")
        if self.d < 2:
            raise UsageError(f"Chains need at least two states, got {self.d}")
        _check_stochastic(self.Q, "Q")
        _check_stochastic(self.Qbar, "Qbar")
        self.Q.setflags(write=False)
        self.Qbar.setflags(write=False)

    @property
    def T(self) -> int:
        return int(self.Q.shape[0])

    @property
    def d(self) -> int:
        return int(self.Q.shape[1])

    def qbar_prev(self, t: int) -> np.ndarray:
        """Qbar[t-1], with the identity at t = 0."""
        return np.eye(self.d) if t == 0 else self.Qbar[t - 1]

    def check_step(self, t: int, lowest: int = 0) -> None:
        if not lowest <= t < self.T:
            raise StepRangeError(f"Step {t} outside [{lowest}, {self.T})")

    @classmethod
    def from_matrices(cls, Q: np.ndarray | Sequence[np.ndarray], name: str = "custom") -> "TransitionChain":
        """Chain from explicit one-step matrices; Qbar is accumulated left to right."""
        Q = np.array(Q, dtype=np.float64)
        Qbar = np.empty_like(Q)
        running = np.eye(Q.shape[-1])
        for t in range(Q.shape[0]):
            running = running @ Q[t]
            Qbar[t] = running
        return cls(Q=Q, Qbar=Qbar, name=name)


def _check_stochastic(matrices: np.ndarray, label: str) -> None:
    if np.any(matrices < 0.0):
        raise UsageError(f"{label} has negative entries")
    rows = matrices.sum(axis=-1)
    if np.max(np.abs(rows - 1.0)) > STOCHASTIC_TOLERANCE:
        raise UsageError(f"{label} rows must sum to 1 within {STOCHASTIC_TOLERANCE}")


def _validate_distribution(p: np.ndarray, label: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or np.max(np.abs(p.sum(axis=-1) - 1.0)) > STOCHASTIC_TOLERANCE:
        raise UsageError(f"{label} must be a probability vector")
    return p


def make_uniform_chain(d: int, schedule: Schedule) -> TransitionChain:
    """Q[t] = (1 - beta_t) I + beta_t / d * 11^T."""
    if d < 2:
        raise UsageError(f"Chains need at least two states, got {d}")
    return make_marginal_chain(d, schedule, np.full(d, 1.0 / d), name="uniform")


def make_marginal_chain(
    d: int, schedule: Schedule, marginals: np.ndarray, name: str = "marginal"
) -> TransitionChain:
    """
    Q[t] = (1 - beta_t) I + beta_t 1 m^T: with probability beta_t the state is
    redrawn from the class marginals m.
    """
    marginals = _validate_distribution(marginals, "marginals")
    if marginals.shape != (d,):
        raise UsageError(f"Expected {d} marginals, got shape {marginals.shape}")
    beta = schedule.beta[:, None, None]
    Q = (1.0 - beta) * np.eye(d) + beta * np.broadcast_to(marginals, (d, d))
    return TransitionChain.from_matrices(Q, name=name)


def one_hot(states: np.ndarray | int, d: int) -> np.ndarray:
    """One-hot rows for integer states, shape states.shape + (d,)."""
    states = np.asarray(states, dtype=np.int64)
    if np.any((states < 0) | (states >= d)):
        raise UsageError(f"States must lie in [0, {d})")
    return np.eye(d)[states]


def marginal(x0: np.ndarray, chain: TransitionChain, t: int) -> np.ndarray:
    """q(x_t | x_0) = x_0 Qbar[t]; rows for batched one-hots."""
    chain.check_step(t)
    return np.asarray(x0, dtype=np.float64) @ chain.Qbar[t]


def posterior(xt: np.ndarray, x0: np.ndarray, chain: TransitionChain, t: int) -> np.ndarray:
    """
    q(x_{t-1} | x_t, x_0) = (x_t Q[t]^T * x_0 Qbar[t-1]) / (x_0 Qbar[t] x_t^T).

    Raises:
        ImpossibleEvidenceError: If x_t cannot be reached from x_0 in t+1 steps
    """
    chain.check_step(t, lowest=1)
    xt = np.asarray(xt, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    numerator = (xt @ chain.Q[t].T) * (x0 @ chain.Qbar[t - 1])
    evidence = np.sum((x0 @ chain.Qbar[t]) * xt, axis=-1, keepdims=True)
    if np.any(evidence <= 0.0):
        raise ImpossibleEvidenceError(f"Observed (x_0, x_t) pair has zero probability at step {t}")
    return numerator / evidence


def reverse_distribution(
    xt: np.ndarray,
    predicted_p0: np.ndarray,
    chain: TransitionChain,
    t: int,
    weighting: ReverseWeighting = "joint",
) -> np.ndarray:
    """
    Reverse step p(x_{t-1} | x_t) marginalised over a predicted x_0 distribution.

    joint:     proportional to sum_{x0} q(x_{t-1}, x_t | x0) p(x0)
    posterior: proportional to sum_{x0} q(x_{t-1} | x_t, x0) p(x0), skipping
               x0 that cannot reach x_t

    Step 0 is the final step, with Qbar[-1] = I.

    Raises:
        ImpossiblePredictionError: If every term vanishes
    """
    chain.check_step(t)
    xt = np.asarray(xt, dtype=np.float64)
    p0 = _validate_distribution(predicted_p0, "predicted_p0")
    prev = chain.qbar_prev(t)
    likelihood = xt @ chain.Q[t].T

    if weighting == "posterior":
        evidence = xt @ chain.Qbar[t].T
        with np.errstate(divide="ignore", invalid="ignore"):
            p0 = np.where(evidence > 0.0, p0 / evidence, 0.0)
    elif weighting != "joint":
        raise UsageError(f"Unknown reverse weighting '{weighting}'")

    unnormalised = (p0 @ prev) * likelihood
    unnormalised = np.where(likelihood > 0.0, unnormalised, 0.0)
    total = unnormalised.sum(axis=-1, keepdims=True)
    if np.any(total <= 0.0):
        raise ImpossiblePredictionError(f"Every reverse term vanishes at step {t}")
    return unnormalised / total


def sample_categorical(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per distribution along the last axis; returns probabilities.shape[:-1]."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    d = probabilities.shape[-1]
    flat = probabilities.reshape(-1, d)
    cumulative = np.cumsum(flat, axis=-1)
    u = rng.random(flat.shape[0]) * cumulative[:, -1]
    draws = np.minimum((cumulative <= u[:, None]).sum(axis=-1), d - 1)
    return draws.reshape(probabilities.shape[:-1])


def forward_sample(
    states: np.ndarray, chain: TransitionChain, t: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw x_t ~ q(x_t | x_0) for integer states with per-item steps."""
    states = np.asarray(states, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    return sample_categorical(chain.Qbar[t, states], rng)


def reverse_sample(
    chain: TransitionChain,
    predict: Callable[[np.ndarray, int], np.ndarray],
    terminal_states: np.ndarray,
    rng: np.random.Generator,
    weighting: ReverseWeighting = "joint",
) -> np.ndarray:
    """
    Ancestral sampling from x_{T-1} down to the clean state.

    Args:
        predict: Maps (integer states, t) to p(x_0 | x_t), shape states.shape + (d,)
        terminal_states: Integer states at step T-1, any shape
    """
    states = np.asarray(terminal_states, dtype=np.int64).copy()
    for t in range(chain.T - 1, -1, -1):
        probabilities = reverse_distribution(
            one_hot(states, chain.d), predict(states, t), chain, t, weighting
        )
        states = sample_categorical(probabilities, rng)
    return states


def terminal_distribution(chain: TransitionChain, data_marginals: np.ndarray) -> np.ndarray:
    """q(x_{T-1}) for data distributed according to data_marginals."""
    return _validate_distribution(data_marginals, "data_marginals") @ chain.Qbar[-1]


@dataclass
class GroupedSample:
    """Two groups of categorical variables and the weight of the second group."""

    group_a: np.ndarray
    group_b: np.ndarray
    lam: float = 1.0

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise UsageError(f"lambda must be nonnegative, got {self.lam}")
        for label, group in (("A", self.group_a), ("B", self.group_b)):
            if group.size and (
                np.any((group != 0.0) & (group != 1.0)) or np.any(group.sum(axis=-1) != 1.0)
            ):
                raise UsageError(f"Group {label} must contain valid one-hot rows")


def grouped_cross_entropy(
    predictions_a: np.ndarray, predictions_b: np.ndarray, truth: GroupedSample
) -> float:
    """
    sum_A CE(x_i, p_i) + lambda * sum_B CE(e_j, p_j), natural log.

    A zero probability on a true class gives math.inf.
    """
    def summed(predictions: np.ndarray, onehots: np.ndarray) -> float:
        if onehots.size == 0:
            return 0.0
        chosen = np.sum(np.asarray(predictions, dtype=np.float64) * onehots, axis=-1)
        if np.any(chosen <= 0.0):
            return math.inf
        return float(-np.sum(np.log(chosen)))

    loss_a = summed(predictions_a, truth.group_a)
    loss_b = summed(predictions_b, truth.group_b)
    if math.isinf(loss_b) and truth.lam > 0:
        return math.inf
    return loss_a + (truth.lam * loss_b if truth.lam > 0 else 0.0)


def quantize(points: np.ndarray, d: int, limit: float) -> np.ndarray:
    """Per-axis bin index of each point over d equal bins on [-limit, limit]; outliers clipped."""
    if d < 2:
        raise UsageError(f"Need at least two bins, got {d}")
    scaled = (np.asarray(points, dtype=np.float64) + limit) / (2.0 * limit) * d
    return np.clip(np.floor(scaled), 0, d - 1).astype(np.int64)


def histogram(states: np.ndarray, d: int) -> np.ndarray:
    """Empirical class distribution of integer states."""
    states = np.asarray(states, dtype=np.int64).ravel()
    return np.bincount(states, minlength=d) / max(states.size, 1)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def chain_frame(chain: TransitionChain) -> pd.DataFrame:
    t, i, j = np.meshgrid(np.arange(chain.T), np.arange(chain.d), np.arange(chain.d), indexing="ij")
    return pd.DataFrame({"t": t.ravel(), "i": i.ravel(), "j": j.ravel(), "Q_ij": chain.Q.ravel()})


def dump_chain(chain: TransitionChain, path: Path) -> Path:
    """Write the one-step matrices as CSV rows (t, i, j, Q_ij)."""
    path = Path(path)
    chain_frame(chain).to_csv(path, index=False)
    logger.debug("chain_dumped", path=str(path), chain=chain.name, d=chain.d, T=chain.T)
    return path


def build_chain(
    kind: str, d: int, schedule: Schedule, marginals: Optional[np.ndarray] = None
) -> TransitionChain:
    """Dispatch on chain kind ('uniform' or 'marginal')."""
    if kind == "uniform":
        return make_uniform_chain(d, schedule)
    if kind == "marginal":
        if marginals is None:
            raise UsageError("The marginal chain needs class marginals")
        return make_marginal_chain(d, schedule, marginals)
    raise UsageError(f"Unknown chain kind '{kind}'")
