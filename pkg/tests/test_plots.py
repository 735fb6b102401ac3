"""Snapshot figure construction (no image export)."""

import pandas as pd

from src.analysis.plots import scatter_panels


class TestScatterPanels:
    def test_one_panel_per_step(self):
        frame = pd.DataFrame(
            {
                "snapshot_t": [9, 9, 4, 4, 0, 0],
                "x": [0.0, 1.0, 0.5, 0.2, -4.0, 4.0],
                "y": [0.0, 1.0, 0.5, 0.2, -4.0, 4.0],
            }
        )
        figure = scatter_panels(frame, "snapshot_t")
        assert len(figure.data) == 3
        assert [a.text for a in figure.layout.annotations] == ["t = 9", "t = 4", "t = 0"]
        assert list(figure.layout.xaxis.range) == [-7.0, 7.0]

    def test_colour_column(self):
        frame = pd.DataFrame({"t": [0, 0], "x": [0.0, 1.0], "y": [0.0, 1.0], "cluster": [0, 1]})
        figure = scatter_panels(frame, "t", "cluster")
        assert list(figure.data[0].marker.color) == [0, 1]
