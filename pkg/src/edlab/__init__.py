"""edlab: desk-scale training and verification lab for energy-based models."""

__version__ = "0.1.0"
