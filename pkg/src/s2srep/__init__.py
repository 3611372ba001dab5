"""Unsupervised sequence representations for hourly clinical time series."""

__version__ = "0.1.0"
