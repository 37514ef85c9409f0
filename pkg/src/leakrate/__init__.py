"""Certified lower bounds on device-independent keyrate quantities under
constrained leakage."""

__version__ = "0.1.0"
