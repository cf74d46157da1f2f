"""Offline figure generator for kpilab run directories."""

__version__ = "0.1.0"
