"""Archival metadata integration workbench."""

__version__ = "0.1.0"
