"""pushfilter - interactive visuo-tactile estimation of object shape and physical parameters."""

from .config import __version__

__author__ = "pushfilter Team"

__all__ = ['__version__']
