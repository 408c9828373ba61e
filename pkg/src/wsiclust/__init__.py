"""Unsupervised clustering and few-shot labeling of tiled slide patches."""

__version__ = "0.1.0"
