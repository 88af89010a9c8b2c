"""Pseudospectral laboratory for randomized energy-critical NLS."""
__version__ = "0.1.0"
