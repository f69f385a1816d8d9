"""Piecewise-affine barrier functions and invariant sets for PWA systems."""

__version__ = "0.1.0"
