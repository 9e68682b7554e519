"""Pseudospectral solver and verification harness for u_t = -Lambda^alpha u + lambda u^p."""

__version__ = "0.1.0"
