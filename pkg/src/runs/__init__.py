"""
Run Module

Reproducible run directories: each CLI command executes as a BaseRun that
writes its artifacts plus a manifest recording how to reproduce them.
"""

from src.runs.base import BaseRun, RunManifest
from src.runs.commands import reproduce

__all__ = [
    "BaseRun",
    "RunManifest",
    "reproduce",
]
