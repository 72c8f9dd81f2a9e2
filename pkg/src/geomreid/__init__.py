"""Geometric person re-identification toolkit with a shortcut-bias audit."""

__version__ = "0.1.0"
