"""Reduced input-subspace NMPC toolkit with a desk-scale benchmark harness."""

__version__ = "0.1.0"
