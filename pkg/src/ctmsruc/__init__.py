"""Continuous-time multistage reserve and unit commitment toolkit."""

__version__ = "0.1.0"
