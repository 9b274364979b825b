"""Diagnostic figure rendering for modscat trace directories (file contracts only)."""

__version__ = "0.1.0"
