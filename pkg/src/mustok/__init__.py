"""Subword tokenization for symbolic music, with structure and quality metrics."""

__version__ = "0.1.0"
