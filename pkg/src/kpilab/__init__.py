"""Pseudospectral simulator and diagnostic lab for the KP-I equation."""

__version__ = "0.1.0"
