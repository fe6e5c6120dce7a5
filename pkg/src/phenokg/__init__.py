"""Phenotype-driven knowledge-graph expansion."""

__version__ = "0.1.0"
