"""Sentiment consolidation toolkit for meta-review generation and evaluation."""

__version__ = "0.1.0"
