"""Tests for src/ui/plot_canvas.py."""

import math

import pytest

from src.ui.plot_canvas import PlotCanvas, nice_ticks


class TestNiceTicks:

    @pytest.mark.parametrize('lo, hi', [(0.0, 1.0), (0.013, 0.87), (-3.2, 41.0), (5.0, 5.0)])
    def test_covers_range(self, lo, hi):
        ticks = nice_ticks(lo, hi, 5)
        assert len(ticks) >= 2
        assert ticks[0] <= lo
        assert ticks[-1] >= hi
        assert all(b > a for a, b in zip(ticks, ticks[1:]))

    def test_round_steps(self):
        assert nice_ticks(0.0, 1.0, 5) == [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]

    def test_non_finite(self):
        assert nice_ticks(0.0, math.inf, 5) == []


class TestPlotCanvas:

    def test_line_plot(self, tmp_path):
        path = str(tmp_path / 'plots' / 'nrmse.svg')
        series = {'block': ([1, 2, 3], [0.4, 0.2, 0.1]), 'pair': ([1, 2, 3], [0.5, float('nan'), 0.3])}
        assert PlotCanvas().line_plot(path, series, 'Error', 'interaction', 'NRMSE') == path
        text = (tmp_path / 'plots' / 'nrmse.svg').read_text()
        assert '<svg' in text

    def test_bar_plot(self, tmp_path):
        path = str(tmp_path / 'bars.svg')
        PlotCanvas().bar_plot(path, ['a', 'b'], {'estimated': [1e-4, 2e-4], 'baseline': [3e-4, 1e-4]},
                              'Tracking', 'MSE')
        assert '<svg' in (tmp_path / 'bars.svg').read_text()

    def test_empty_series(self, tmp_path):
        path = str(tmp_path / 'empty.svg')
        PlotCanvas().line_plot(path, {}, 'Nothing', 'x', 'y')
        assert (tmp_path / 'empty.svg').exists()
