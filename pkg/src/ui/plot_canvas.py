"""Line and bar plots drawn with QPainter onto an SVG generator."""

import logging
import math
import os
from typing import Dict, List, Sequence, Tuple

import numpy as np
from PyQt5.QtCore import QPointF, QRectF, QSize, Qt
from PyQt5.QtGui import QBrush, QColor, QFont, QGuiApplication, QPainter, QPen
from PyQt5.QtSvg import QSvgGenerator

from ..config.constants import COLORS
from ..config.styles import PLOT_STYLE, SERIES_COLORS

logger = logging.getLogger(__name__)

Series = Dict[str, Tuple[Sequence[float], Sequence[float]]]


_APP = None


def _ensure_app():
    """Text rendering needs a GUI application; plots run headless on the offscreen platform."""
    global _APP
    if QGuiApplication.instance() is None:
        os.environ.setdefault('QT_QPA_PLATFORM', 'offscreen')
        _APP = QGuiApplication([])
    return QGuiApplication.instance()


def nice_ticks(lo: float, hi: float, count: int) -> List[float]:
    """Round tick values covering [lo, hi]."""
    if not np.isfinite(lo) or not np.isfinite(hi):
        return []
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(count, 1)
    magnitude = 10 ** math.floor(math.log10(raw))
    step = next(m * magnitude for m in (1, 2, 5, 10) if m * magnitude >= raw)
    start = math.floor(lo / step) * step
    ticks = [round(start, 12)]
    while ticks[-1] < hi - 1e-12 * step or len(ticks) < 2:
        ticks.append(round(ticks[-1] + step, 12))
    return ticks


class PlotCanvas:
    """Writes simple vector plots in the application palette."""

    def __init__(self, style: dict = None):
        self.style = dict(PLOT_STYLE, **(style or {}))
        _ensure_app()

    def _color(self, name: str, index: int) -> QColor:
        return QColor(COLORS.get(name, SERIES_COLORS[index % len(SERIES_COLORS)]))

    def _begin(self, path: str, title: str):
        s = self.style
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        generator = QSvgGenerator()
        generator.setFileName(path)
        generator.setSize(QSize(s['width'], s['height']))
        generator.setViewBox(QRectF(0, 0, s['width'], s['height']))
        generator.setTitle(title)
        painter = QPainter(generator)
        painter.setRenderHint(QPainter.Antialiasing)
        painter.fillRect(QRectF(0, 0, s['width'], s['height']), QColor(s['background']))
        painter.setPen(QColor(s['text']))
        painter.setFont(QFont(s['font_family'], s['title_size'], QFont.Bold))
        painter.drawText(QRectF(0, 0, s['width'], s['margin_top']), Qt.AlignCenter, title)
        return generator, painter

    def _plot_rect(self) -> QRectF:
        s = self.style
        return QRectF(s['margin_left'], s['margin_top'],
                      s['width'] - s['margin_left'] - s['margin_right'],
                      s['height'] - s['margin_top'] - s['margin_bottom'])

    def _axes(self, painter: QPainter, rect: QRectF, y_ticks: List[float], y_map, xlabel: str,
              ylabel: str):
        s = self.style
        painter.fillRect(rect, QColor(s['surface']))
        painter.setFont(QFont(s['font_family'], s['font_size']))
        for t in y_ticks:
            y = y_map(t)
            painter.setPen(QPen(QColor(s['grid']), s['grid_width']))
            painter.drawLine(QPointF(rect.left(), y), QPointF(rect.right(), y))
            painter.setPen(QColor(s['text_secondary']))
            painter.drawText(QRectF(0, y - 8, rect.left() - 6, 16), Qt.AlignRight | Qt.AlignVCenter,
                             f"{t:.3g}")
        painter.setPen(QColor(s['text']))
        painter.drawText(QRectF(rect.left(), rect.bottom() + 22, rect.width(), 20), Qt.AlignCenter, xlabel)
        painter.save()
        painter.translate(14, rect.center().y())
        painter.rotate(-90)
        painter.drawText(QRectF(-rect.height() / 2, -10, rect.height(), 20), Qt.AlignCenter, ylabel)
        painter.restore()

    def _legend(self, painter: QPainter, rect: QRectF, names: Sequence[str]):
        s = self.style
        painter.setFont(QFont(s['font_family'], s['font_size']))
        for i, name in enumerate(names):
            y = rect.top() + 8 + 16 * i
            painter.fillRect(QRectF(rect.right() - 120, y, 10, 10), self._color(name, i))
            painter.setPen(QColor(s['text']))
            painter.drawText(QRectF(rect.right() - 104, y - 3, 100, 16), Qt.AlignLeft | Qt.AlignVCenter, name)

    @staticmethod
    def _range(values) -> Tuple[float, float]:
        v = np.asarray(values, dtype=float)
        v = v[np.isfinite(v)]
        if v.size == 0:
            return 0.0, 1.0
        lo, hi = float(v.min()), float(v.max())
        return (lo, hi) if hi > lo else (lo - 0.5, hi + 0.5)

    def line_plot(self, path: str, series: Series, title: str, xlabel: str, ylabel: str) -> str:
        """
        Draw one polyline per series; non-finite points break the line.

        Args:
            path: Output .svg path
            series: name -> (x values, y values)
            title: Plot title
            xlabel: X axis label
            ylabel: Y axis label

        Returns:
            path
        """
        s = self.style
        xs = np.concatenate([np.asarray(x, dtype=float) for x, _ in series.values()]) if series else []
        ys = np.concatenate([np.asarray(y, dtype=float) for _, y in series.values()]) if series else []
        x_lo, x_hi = self._range(xs)
        y_ticks = nice_ticks(*self._range(ys), s['ticks'])
        y_lo, y_hi = y_ticks[0], y_ticks[-1]
        rect = self._plot_rect()

        def x_map(x):
            return rect.left() + (x - x_lo) / (x_hi - x_lo) * rect.width()

        def y_map(y):
            return rect.bottom() - (y - y_lo) / (y_hi - y_lo) * rect.height()

        generator, painter = self._begin(path, title)
        self._axes(painter, rect, y_ticks, y_map, xlabel, ylabel)
        for i, (name, (x, y)) in enumerate(series.items()):
            color = self._color(name, i)
            painter.setPen(QPen(color, s['line_width']))
            prev = None
            for xv, yv in zip(x, y):
                if not (np.isfinite(xv) and np.isfinite(yv)):
                    prev = None
                    continue
                point = QPointF(x_map(xv), y_map(yv))
                if prev is not None:
                    painter.drawLine(prev, point)
                painter.setBrush(QBrush(color))
                painter.drawEllipse(point, s['marker_size'], s['marker_size'])
                prev = point
        self._legend(painter, rect, list(series))
        painter.end()
        logger.debug(f"Wrote line plot {path}")
        return path

    def bar_plot(self, path: str, labels: Sequence[str], groups: Dict[str, Sequence[float]], title: str,
                 ylabel: str) -> str:
        """
        Grouped bars: one group per label, one bar per entry of groups.

        Returns:
            path
        """
        s = self.style
        values = np.concatenate([np.asarray(v, dtype=float) for v in groups.values()]) if groups else []
        lo, hi = self._range(values)
        y_ticks = nice_ticks(min(lo, 0.0), hi, s['ticks'])
        y_lo, y_hi = y_ticks[0], y_ticks[-1]
        rect = self._plot_rect()

        def y_map(y):
            return rect.bottom() - (y - y_lo) / (y_hi - y_lo) * rect.height()

        generator, painter = self._begin(path, title)
        self._axes(painter, rect, y_ticks, y_map, '', ylabel)
        n_groups, n_bars = max(len(labels), 1), max(len(groups), 1)
        slot = rect.width() / n_groups
        bar = slot * (1.0 - s['bar_gap']) / n_bars
        painter.setFont(QFont(s['font_family'], s['font_size']))
        for g, label in enumerate(labels):
            left = rect.left() + g * slot + slot * s['bar_gap'] / 2
            for b, (name, vals) in enumerate(groups.items()):
                v = float(vals[g])
                if not np.isfinite(v):
                    continue
                top, base = y_map(v), y_map(max(y_lo, 0.0))
                painter.fillRect(QRectF(left + b * bar, min(top, base), bar, abs(base - top)),
                                 self._color(name, b))
            painter.setPen(QColor(s['text_secondary']))
            painter.drawText(QRectF(rect.left() + g * slot, rect.bottom() + 4, slot, 16), Qt.AlignCenter,
                             str(label))
        self._legend(painter, rect, list(groups))
        painter.end()
        logger.debug(f"Wrote bar plot {path}")
        return path
