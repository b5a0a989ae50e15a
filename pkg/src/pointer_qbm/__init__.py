"""Pointer-state unraveling of quantum Brownian motion."""
__version__ = "0.1.0"
