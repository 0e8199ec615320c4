"""Coflow scheduling on heterogeneous parallel network cores."""

__version__ = "0.1.0"
