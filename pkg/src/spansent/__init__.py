"""Span-level aspect sentiment classification with adversarial bias removal
and unsupervised opinion extraction."""

__version__ = "0.1.0"
