"""Gaussian beam summation for the wave equation in convex domains."""

__version__ = "0.1.0"
