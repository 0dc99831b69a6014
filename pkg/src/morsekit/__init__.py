"""Morse homology computed from numerical gradient flows."""

__version__ = "0.1.0"
