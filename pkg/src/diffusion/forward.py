"""
Forward Diffusion Processes

Produces training tuples (x_t, t, eps) with
    x_t = sqrt(alpha_bar_t) * x_0 + sqrt(1 - alpha_bar_t) * eps

Two ways of choosing eps:
- Gaussian noise: eps ~ N(0, I), drawn from a caller-owned generator
- Deterministic digits: eps built from the decimal digits of x_0, pushed
  through the normal quantile function. No generator state at all.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import structlog
from scipy.special import erfc

from src.diffusion.schedule import Schedule
from src.diffusion.target import Dataset
from src.errors import UsageError

logger = structlog.get_logger(__name__)

DIGIT_WINDOWS = 6
QUANTILE_CLAMP = 1e-6

# Rational approximation coefficients for the normal quantile (Acklam)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


class ForwardKind(str, Enum):
    """How the perturbation eps is produced."""

    GAUSSIAN = "gaussian"
    DETERMINISTIC = "deterministic"


@dataclass
class NoisedBatch:
    """A batch of clean points, their steps, noised points and the effective eps."""

    x0: np.ndarray
    t: np.ndarray
    xt: np.ndarray
    eps: np.ndarray

    def __len__(self) -> int:
        return int(self.x0.shape[0])


def _mix(x0: np.ndarray, t: np.ndarray, eps: np.ndarray, schedule: Schedule) -> NoisedBatch:
    schedule.check_step(t)
    t = np.asarray(t, dtype=np.int64)
    alpha_bar = schedule.alpha_bar[t][:, None]
    xt = np.sqrt(alpha_bar) * x0 + np.sqrt(1.0 - alpha_bar) * eps
    return NoisedBatch(x0=x0, t=t, xt=xt, eps=eps)


def diffuse_gaussian(
    x0: np.ndarray, t: np.ndarray, schedule: Schedule, rng: np.random.Generator
) -> NoisedBatch:
    """Closed-form Gaussian noising q(x_t | x_0) for a batch."""
    x0 = np.asarray(x0, dtype=np.float64)
    schedule.check_step(t)
    eps = rng.standard_normal(x0.shape)
    return _mix(x0, t, eps, schedule)


def inverse_normal_cdf(u: np.ndarray | float) -> np.ndarray:
    """
    Standard normal quantile function.

    Rational approximation in three regions followed by one Halley
    refinement against erfc, accurate to ~1e-15 over [1e-6, 1 - 1e-6].

    Raises:
        UsageError: If any u lies outside the open interval (0, 1)
    """
    p = np.asarray(u, dtype=np.float64)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise UsageError("Quantile argument must lie in (0, 1)")

    x = np.empty_like(p)
    low = p < _P_LOW
    high = p > 1.0 - _P_LOW
    mid = ~(low | high)

    q = np.sqrt(-2.0 * np.log(p[low]))
    x[low] = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )
    q = np.sqrt(-2.0 * np.log(1.0 - p[high]))
    x[high] = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
        (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    )
    q = p[mid] - 0.5
    r = q * q
    x[mid] = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )

    # Halley step
    e = 0.5 * erfc(-x / np.sqrt(2.0)) - p
    step = e * np.sqrt(2.0 * np.pi) * np.exp(0.5 * x * x)
    x = x - step / (1.0 + 0.5 * x * step)
    return x if x.ndim else x[()]


def digit_fraction(x0: np.ndarray, t: np.ndarray | int) -> np.ndarray:
    """u = frac(|x0| * 10^(1 + t mod 6)), clamped to [1e-6, 1 - 1e-6]."""
    x0 = np.asarray(x0, dtype=np.float64)
    t = np.asarray(t, dtype=np.int64)
    scale = 10.0 ** (1 + t % DIGIT_WINDOWS)
    if scale.ndim:
        scale = scale.reshape(scale.shape + (1,) * (x0.ndim - scale.ndim))
    frac, _ = np.modf(np.abs(x0) * scale)
    return np.clip(frac, QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP)


def deterministic_eps(x0: np.ndarray, t: np.ndarray | int) -> np.ndarray:
    """
    Pseudo-noise from the decimal digits of x0.

    Each coordinate picks the digit window selected by t mod 6 and maps the
    resulting fraction through the normal quantile function. Same (x0, t)
    always yields the same output.
    """
    return inverse_normal_cdf(digit_fraction(x0, t))


def diffuse_deterministic(x0: np.ndarray, t: np.ndarray, schedule: Schedule) -> NoisedBatch:
    """Noising with deterministic digit pseudo-noise; no generator involved."""
    x0 = np.asarray(x0, dtype=np.float64)
    schedule.check_step(t)
    return _mix(x0, t, deterministic_eps(x0, t), schedule)


def diffuse(
    kind: ForwardKind,
    x0: np.ndarray,
    t: np.ndarray,
    schedule: Schedule,
    rng: Optional[np.random.Generator] = None,
) -> NoisedBatch:
    """Dispatch to the forward process of the given kind."""
    if ForwardKind(kind) is ForwardKind.DETERMINISTIC:
        return diffuse_deterministic(x0, t, schedule)
    if rng is None:
        raise UsageError("Gaussian diffusion needs a random generator")
    return diffuse_gaussian(x0, t, schedule, rng)


def diffuse_chain(
    x0: np.ndarray, t_end: int, schedule: Schedule, rng: np.random.Generator
) -> np.ndarray:
    """
    Compose single Markov steps x_t = sqrt(alpha_t) x_{t-1} + sqrt(beta_t) z
    for t = 0 .. t_end, starting from the clean points.
    """
    schedule.check_step(t_end)
    x = np.asarray(x0, dtype=np.float64).copy()
    for t in range(t_end + 1):
        x = np.sqrt(schedule.alpha[t]) * x + np.sqrt(schedule.beta[t]) * rng.standard_normal(x.shape)
    return x


def forward_trajectory(
    dataset: Dataset,
    schedule: Schedule,
    kind: ForwardKind,
    steps: Sequence[int],
    seed: int = 0,
) -> pd.DataFrame:
    """
    Snapshots of the forward process at the given steps.

    Returns:
        DataFrame with columns t, x, y, cluster
    """
    rng = np.random.default_rng(seed)
    frames = []
    for t in sorted(set(steps)):
        t_batch = np.full(len(dataset), t, dtype=np.int64)
        noised = diffuse(kind, dataset.points, t_batch, schedule, rng)
        frames.append(
            pd.DataFrame(
                {
                    "t": t_batch,
                    "x": noised.xt[:, 0],
                    "y": noised.xt[:, 1],
                    "cluster": dataset.labels,
                }
            )
        )
    logger.debug("forward_trajectory_built", kind=ForwardKind(kind).value, steps=sorted(set(steps)))
    return pd.concat(frames, ignore_index=True)


def dump_forward_trajectory(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False)
    return path
