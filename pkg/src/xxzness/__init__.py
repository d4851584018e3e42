"""Boundary-driven XXZ chain: matrix-product steady state, transport and counting statistics."""

__version__ = "0.1.0"
