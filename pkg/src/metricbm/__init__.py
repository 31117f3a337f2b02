"""Brownian motions on metric graphs with Wentzell vertex conditions."""

__version__ = "0.1.0"
