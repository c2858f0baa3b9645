"""Probabilistic aircraft trajectory prediction and UAM speed-adjustment simulation."""

__version__ = "0.1.0"
