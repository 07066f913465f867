"""Spectral simulation and verification tools for tensor field theories on the torus."""

__version__ = "0.1.0"
