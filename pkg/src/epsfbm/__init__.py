"""Epsilon-strong simulation of fractional Brownian motion."""
__version__ = "0.1.0"
