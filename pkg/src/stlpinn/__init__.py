"""Stiff-regime transfer for multi-head physics-informed networks."""

__version__ = "0.1.0"
