"""Penalized finite-volume solver for reacting, heat-conducting compressible flow
in a moving domain."""

__version__ = "0.1.0"
