"""Concentration and large-deviation bounds for sums of heavy-tailed variables."""

__version__ = "0.1.0"
