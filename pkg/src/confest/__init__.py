"""Confidence estimation for sequence recognisers."""

__version__ = "0.1.0"
