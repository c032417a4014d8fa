"""Tree-structured horizontal-expansion CNNs for single-image super-resolution."""

__version__ = "0.1.0"
