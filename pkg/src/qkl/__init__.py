"""Quantum kernel learning toolkit for small-vocabulary spoken command recognition."""

__version__ = "0.1.0"
