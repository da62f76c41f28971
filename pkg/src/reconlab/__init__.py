"""Reconstruction attacks, privacy mechanisms and disclosure control on small census-like data."""

__version__ = "0.1.0"
