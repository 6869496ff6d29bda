"""Iterative generate, test, analyze, evaluate and refine engine."""

__version__ = "0.1.0"
