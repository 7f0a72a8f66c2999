"""Frequency-modulated coarse-to-fine training of 2D Gaussian splats."""

__version__ = "0.1.0"
