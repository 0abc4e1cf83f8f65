"""Impermanent-loss measurement and LP strategy analytics for AMMs."""

__version__ = "0.1.0"
