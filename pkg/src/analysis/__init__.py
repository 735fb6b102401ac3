"""Analysis module for sample metrics, comparison studies and figures."""

from src.analysis.metrics import MetricsReport, energy_distance, evaluate

__all__ = ["MetricsReport", "energy_distance", "evaluate"]
