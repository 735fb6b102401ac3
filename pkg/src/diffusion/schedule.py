"""
Variance Schedules

Builds the beta_t / alpha_t / alpha_bar_t arrays of the forward process.

Two kinds are supported:
- Linear: betas interpolated between two endpoints (DDPM convention)
- Cosine: alpha_bar follows a squared cosine with a small offset s,
  betas derived from consecutive ratios and clipped (improved-DDPM convention)

Indexing runs t = 0 .. T-1, t = 0 being the first noising step.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog

from src.config.settings import settings
from src.errors import InputMissingError, ScheduleError, StepRangeError

logger = structlog.get_logger(__name__)

PRODUCT_RTOL = 1e-12


class ScheduleKind(str, Enum):
    """Supported variance schedule shapes."""

    LINEAR = "linear"
    COSINE = "cosine"


@dataclass(frozen=True, eq=False)
class Schedule:
    """Precomputed variance schedule. Immutable after construction."""

    kind: ScheduleKind
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for arr in (self.beta, self.alpha, self.alpha_bar):
            arr.setflags(write=False)
        self.validate()

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])

    @property
    def alpha_bar_prev(self) -> np.ndarray:
        """alpha_bar shifted by one step, with alpha_bar_{-1} = 1."""
        return np.concatenate(([1.0], self.alpha_bar[:-1]))

    def check_step(self, t: Any) -> None:
        """Raise StepRangeError unless every entry of t lies in [0, T)."""
        steps = np.asarray(t)
        if steps.size and (steps.min() < 0 or steps.max() >= self.T):
            raise StepRangeError(f"Step index out of range [0, {self.T}): {t}")

    def validate(self) -> None:
        """Check the schedule invariants, raising ScheduleError on violation."""
        if self.T < 1:
            raise ScheduleError("Schedule needs at least one step")
        if not (np.all(self.beta > 0) and np.all(self.beta <= settings.max_beta)):
            raise ScheduleError(f"Betas must lie in (0, {settings.max_beta}]")
        if not np.array_equal(self.alpha, 1.0 - self.beta):
            raise ScheduleError("alpha must equal 1 - beta")
        product = np.cumprod(self.alpha)
        if not np.allclose(self.alpha_bar, product, rtol=PRODUCT_RTOL, atol=0.0):
            raise ScheduleError("alpha_bar is not the cumulative product of alpha")
        if np.any(np.diff(self.alpha_bar) >= 0):
            raise ScheduleError("alpha_bar must be strictly decreasing")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind.value, "T": self.T, **self.params}


def _from_betas(kind: ScheduleKind, beta: np.ndarray, params: dict[str, Any]) -> Schedule:
    beta = np.asarray(beta, dtype=np.float64)
    alpha = 1.0 - beta
    return Schedule(
        kind=kind,
        beta=beta,
        alpha=alpha,
        alpha_bar=np.cumprod(alpha),
        params=params,
    )


def make_linear(T: int, beta_start: float, beta_end: float) -> Schedule:
    """
    Linear schedule from beta_start to beta_end inclusive.

    Args:
        T: Number of diffusion steps (>= 1)
        beta_start: First beta, 0 < beta_start <= beta_end
        beta_end: Last beta, < 1

    Returns:
        Schedule of kind LINEAR
    """
    if T < 1:
        raise ScheduleError(f"T must be positive, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ScheduleError(
            f"Linear endpoints must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    return _from_betas(
        ScheduleKind.LINEAR,
        beta,
        {"beta_start": beta_start, "beta_end": beta_end},
    )


def make_cosine(T: int, s: float, max_beta: Optional[float] = None) -> Schedule:
    """
    Cosine schedule: alpha_bar_t = f(t+1) / f(0), f(u) = cos^2(((u/T + s) / (1 + s)) * pi/2).

    Betas are 1 - alpha_bar_t / alpha_bar_{t-1} clipped to max_beta; the stored
    alpha_bar is the cumulative product of the clipped alphas.
    """
    if T < 1:
        raise ScheduleError(f"T must be positive, got {T}")
    if s <= 0:
        raise ScheduleError(f"Cosine offset must be positive, got {s}")
    max_beta = settings.max_beta if max_beta is None else max_beta

    u = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((u / T + s) / (1.0 + s)) * np.pi / 2.0) ** 2
    alpha_bar = f / f[0]
    beta = 1.0 - alpha_bar[1:] / alpha_bar[:-1]
    beta = np.minimum(beta, max_beta)
    return _from_betas(ScheduleKind.COSINE, beta, {"s": s, "max_beta": max_beta})


def scaled_linear_endpoints(T: int) -> tuple[float, float]:
    """Default linear endpoints scaled by reference_steps / T and capped at max_beta."""
    scale = settings.linear_reference_steps / T
    start = min(settings.linear_beta_start * scale, settings.max_beta)
    end = min(settings.linear_beta_end * scale, settings.max_beta)
    return start, end


def make_schedule(
    kind: ScheduleKind | str,
    T: int,
    beta_start: Optional[float] = None,
    beta_end: Optional[float] = None,
    s: Optional[float] = None,
) -> Schedule:
    """Build a schedule of the given kind, filling unset parameters from settings."""
    kind = ScheduleKind(kind)
    if T < 1:
        raise ScheduleError(f"T must be positive, got {T}")
    if kind is ScheduleKind.LINEAR:
        default_start, default_end = scaled_linear_endpoints(T)
        return make_linear(
            T,
            default_start if beta_start is None else beta_start,
            default_end if beta_end is None else beta_end,
        )
    return make_cosine(T, settings.cosine_offset if s is None else s)


def schedule_from_dict(description: dict[str, Any]) -> Schedule:
    """Rebuild a schedule from its to_dict() description."""
    kind = ScheduleKind(description["kind"])
    if kind is ScheduleKind.LINEAR:
        return make_linear(description["T"], description["beta_start"], description["beta_end"])
    return make_cosine(description["T"], description["s"], description.get("max_beta"))


def to_frame(schedule: Schedule) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "t": np.arange(schedule.T),
            "beta": schedule.beta,
            "alpha": schedule.alpha,
            "alpha_bar": schedule.alpha_bar,
        }
    )


def dump(schedule: Schedule, path: Path) -> Path:
    """
    Write the schedule as CSV with columns t, beta, alpha, alpha_bar.

    Raises:
        InputMissingError: If the file cannot be written
    """
    path = Path(path)
    try:
        to_frame(schedule).to_csv(path, index=False)
    except OSError as e:
        raise InputMissingError(f"Cannot write schedule to {path}: {e}") from e
    logger.debug("schedule_dumped", path=str(path), kind=schedule.kind.value, T=schedule.T)
    return path


def load(path: Path, kind: ScheduleKind | str = ScheduleKind.LINEAR) -> Schedule:
    """Parse a schedule dump back into a Schedule (bitwise for finite doubles)."""
    path = Path(path)
    if not path.exists():
        raise InputMissingError(f"Schedule file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    return Schedule(
        kind=ScheduleKind(kind),
        beta=frame["beta"].to_numpy(dtype=np.float64),
        alpha=frame["alpha"].to_numpy(dtype=np.float64),
        alpha_bar=frame["alpha_bar"].to_numpy(dtype=np.float64),
    )
