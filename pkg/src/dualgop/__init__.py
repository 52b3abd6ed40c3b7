"""Dual acoustic-model pronunciation scoring and accentedness prediction."""

__version__ = "0.1.0"
