"""Exact-diagonalization and semiclassical study of quench dynamics in the driven Rabi model."""

__version__ = "0.1.0"
