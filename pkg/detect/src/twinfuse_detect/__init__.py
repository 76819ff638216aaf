"""Crack-patch classification and streaming detection client."""

__version__ = "0.1.0"
