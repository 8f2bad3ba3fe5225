"""Survival of a branching random walk that reproduces on returning home."""

__version__ = "0.1.0"
