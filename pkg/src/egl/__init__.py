"""Gradient growth near hyperbolic points of cellular 2D Euler flows: solver, data, diagnostics."""

from .spectral import GridField, SpectralField

__all__ = ["GridField", "SpectralField"]
