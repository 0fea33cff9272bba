"""Hierarchical figure parsing with typed part-relation message passing."""

__version__ = "0.1.0"
