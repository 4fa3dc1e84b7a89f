"""Representation dissimilarity measures and a benchmark harness that scores
them by rank correlation with functional differences."""

__version__ = "0.1.0"
