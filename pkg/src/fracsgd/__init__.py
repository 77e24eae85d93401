"""Numerical laboratory for SGD as diffusion on a fractal loss landscape."""

__version__ = "0.1.0"
