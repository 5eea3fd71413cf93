"""Feasible operation region sampling and monetization toolkit."""

__version__ = "0.1.0"
