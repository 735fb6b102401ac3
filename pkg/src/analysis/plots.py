"""
Scatter Snapshots

Optional SVG rendering of trajectory and forward-process snapshots, one
panel per step. Needs the `plots` extra (plotly with kaleido); never used by
any primary artifact.
"""

from pathlib import Path

import pandas as pd
import structlog

from src.errors import UsageError

logger = structlog.get_logger(__name__)

PANEL_SIZE = 320


def scatter_panels(frame: pd.DataFrame, step_column: str, color_column: str | None = None, limit: float = 7.0):
    """One scatter panel per distinct step, in the frame's step order."""
    try:
        import plotly.graph_objects as go
        from plotly.subplots import make_subplots
    except ImportError as exc:
        raise UsageError("SVG output needs the 'plots' extra (plotly, kaleido)") from exc

    steps = list(dict.fromkeys(frame[step_column].tolist()))
    figure = make_subplots(rows=1, cols=len(steps), subplot_titles=[f"t = {t}" for t in steps])
    for col, t in enumerate(steps, start=1):
        rows = frame[frame[step_column] == t]
        marker = {"size": 2}
        if color_column is not None:
            marker["color"] = rows[color_column]
            marker["colorscale"] = "Viridis"
        figure.add_trace(
            go.Scattergl(x=rows["x"], y=rows["y"], mode="markers", marker=marker, showlegend=False),
            row=1,
            col=col,
        )
        figure.update_xaxes(range=[-limit, limit], row=1, col=col)
        figure.update_yaxes(range=[-limit, limit], row=1, col=col)
    figure.update_layout(width=PANEL_SIZE * len(steps), height=PANEL_SIZE, template="plotly_white")
    return figure


def write_svg(frame: pd.DataFrame, path: Path, step_column: str, color_column: str | None = None) -> Path:
    """Render scatter_panels to an SVG file."""
    path = Path(path)
    figure = scatter_panels(frame, step_column, color_column)
    try:
        figure.write_image(str(path), format="svg")
    except (ImportError, ValueError) as exc:
        raise UsageError(f"Could not render SVG: {exc}") from exc
    logger.debug("svg_written", path=str(path))
    return path
