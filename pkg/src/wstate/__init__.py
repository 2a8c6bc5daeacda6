"""Exact simulation of heralded W-state generation with a quantum eraser."""

__version__ = "0.1.0"
