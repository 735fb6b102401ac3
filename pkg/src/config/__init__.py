"""Configuration module for DiffLab."""

from src.config.logging import configure_logging
from src.config.settings import settings

__all__ = ["configure_logging", "settings"]
