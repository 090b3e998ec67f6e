"""Plot style definitions shared by the SVG plot canvas."""

from .constants import COLORS


PLOT_STYLE = {
    'width': 640,
    'height': 400,
    'margin_left': 64,
    'margin_right': 24,
    'margin_top': 36,
    'margin_bottom': 48,
    'font_family': 'DejaVu Sans',
    'font_size': 10,
    'title_size': 12,
    'line_width': 2.0,
    'grid_width': 1.0,
    'marker_size': 3.0,
    'bar_gap': 0.2,
    'ticks': 5,
    'background': COLORS['background'],
    'surface': COLORS['surface'],
    'grid': COLORS['grid'],
    'text': COLORS['text'],
    'text_secondary': COLORS['text_secondary'],
}

# Series colors in draw order; named series pick their own color first
SERIES_COLORS = [
    COLORS['active'],
    COLORS['uniform'],
    COLORS['random'],
    '#4ec9b0',
    '#c586c0',
    '#9cdcfe',
]
