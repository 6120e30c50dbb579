"""Deterministic desk-scale simulator of an ISAC-enabled intelligent-machine
network with a digital-twin layer."""

__version__ = "0.1.0"
