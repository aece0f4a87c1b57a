"""Coupled-mode simulator and spectral toolkit for cavity magnomechanics."""

__version__ = "0.1.0"
