"""Supervised cross-modal factor analysis."""

__version__ = "0.1.0"
