"""Data-driven design of market-format aggregate flexibility polytopes."""

__version__ = "0.1.0"
