"""UI modules for pushfilter: vector plot emission."""

from .plot_canvas import PlotCanvas

__all__ = ['PlotCanvas']
