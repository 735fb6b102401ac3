"""
DiffLab Application Settings

Loads configuration from environment variables with sensible defaults.
Uses Pydantic Settings for validation and type coercion.
"""

from functools import lru_cache
from pathlib import Path

from pydantic import Field, computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # ─────────────────────────────────────────────────────────────
    # Application Settings
    # ─────────────────────────────────────────────────────────────
    output_root: Path = Field(
        default=Path("runs"),
        description="Default root directory for run outputs",
    )
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(default="text", description="Logging format (json or text)")

    # ─────────────────────────────────────────────────────────────
    # Variance Schedules
    # ─────────────────────────────────────────────────────────────
    default_steps: int = Field(default=100, description="Number of diffusion steps T")
    linear_beta_start: float = Field(
        default=1e-4,
        description="First linear beta at the reference step count",
    )
    linear_beta_end: float = Field(
        default=0.02,
        description="Last linear beta at the reference step count",
    )
    linear_reference_steps: int = Field(
        default=1000,
        description="Step count the linear endpoints are quoted for; scaled by reference/T",
    )
    cosine_offset: float = Field(default=0.008, description="Cosine schedule offset s")
    max_beta: float = Field(default=0.999, description="Upper clip for every beta")

    # ─────────────────────────────────────────────────────────────
    # Ground Truth Mixture
    # ─────────────────────────────────────────────────────────────
    target_mean_1: tuple[float, float] = Field(default=(-4.0, -4.0))
    target_mean_2: tuple[float, float] = Field(default=(4.0, 4.0))
    target_cov_1: tuple[float, float] = Field(
        default=(0.3, 0.1),
        description="Diagonal of the first component's sigma matrix",
    )
    target_cov_2: tuple[float, float] = Field(
        default=(0.2, 0.2),
        description="Diagonal of the second component's sigma matrix",
    )
    sigma_is_std: bool = Field(
        default=False,
        description="Read the sigma diagonals as standard deviations instead of variances",
    )

    # ─────────────────────────────────────────────────────────────
    # Training
    # ─────────────────────────────────────────────────────────────
    dataset_size: int = Field(default=10_000, description="Training points generated by gen")
    batch_size: int = Field(default=64, description="Minibatch size")
    epochs: int = Field(default=50, description="Training epochs")
    learning_rate: float = Field(default=1e-3, description="Adam learning rate")

    # ─────────────────────────────────────────────────────────────
    # Sampling & Evaluation
    # ─────────────────────────────────────────────────────────────
    grid_limit: float = Field(default=7.0, description="Half-width of the particle grid")
    particle_count: int = Field(default=10_000, description="Particles per sampling run")
    record_steps: str = Field(
        default="99,54,36,18,0",
        description="Comma separated trajectory snapshot steps",
    )
    forward_steps: str = Field(
        default="0,27,54,81,99",
        description="Comma separated forward trajectory snapshot steps",
    )
    energy_block_size: int = Field(
        default=2048,
        description="Row block size for pairwise distance sums",
    )

    # ─────────────────────────────────────────────────────────────
    # Discrete Diffusion
    # ─────────────────────────────────────────────────────────────
    discrete_lambda: float = Field(default=1.0, description="Weight of the second variable group")
    discrete_learning_rate: float = Field(default=1e-2, description="Adam learning rate for the demo")
    discrete_epochs: int = Field(default=30, description="Training epochs for the demo")

    @computed_field
    @property
    def record_steps_list(self) -> list[int]:
        """Return trajectory snapshot steps as integers."""
        return [int(s) for s in self.record_steps.split(",") if s.strip()]

    @computed_field
    @property
    def forward_steps_list(self) -> list[int]:
        """Return forward snapshot steps as integers."""
        return [int(s) for s in self.forward_steps.split(",") if s.strip()]


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


# Global settings instance
settings = get_settings()
