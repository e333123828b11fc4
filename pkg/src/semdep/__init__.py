"""Multitask graph-based semantic dependency parsing."""

__version__ = "0.1.0"
