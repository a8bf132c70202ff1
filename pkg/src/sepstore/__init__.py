"""Verifier toolkit for a separation logic with higher-order store."""

__version__ = "0.1.0"
