"""Core modules for pushfilter."""
