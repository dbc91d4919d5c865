"""Deterministic discrete-event simulator of an ARINC 653 core module."""

__version__ = "0.1.0"
