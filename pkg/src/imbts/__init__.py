"""Cost-sensitive deep learning for imbalanced time-series classification."""

__version__ = "0.1.0"
