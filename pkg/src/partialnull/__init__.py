"""Partial null controllability toolkit for coupled parabolic systems."""
__version__ = "0.1.0"
