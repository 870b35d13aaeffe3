"""Conversational assistant backend for agricultural plot characterization."""

__version__ = "0.1.0"
