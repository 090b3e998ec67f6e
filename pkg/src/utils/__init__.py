"""Utility modules for pushfilter."""

from .geometry import RigidGeometry
from .file_operations import FileManager

__all__ = ['RigidGeometry', 'FileManager']
