"""Connectivity kernels, metrics and association fields induced by receptive-profile filter banks."""

__version__ = "0.1.0"
