"""Weighted Laplacian spectral laboratory."""
__version__ = "0.1.0"
