"""Bilingual dual-head Parkinson's speech detector."""

__version__ = "0.1.0"
