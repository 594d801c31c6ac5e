"""Incremental kTC topology control from graph-transformation rules."""

__version__ = "0.1.0"
