"""Boundary-control reconstruction of a potential from wave response data."""

__version__ = "0.1.0"
