"""Prototype-based neural predicates for a probabilistic logic engine."""

__version__ = "0.1.0"
