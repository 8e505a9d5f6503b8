"""Intrinsic volume estimation from configuration counts on binary lattice images."""

__version__ = "0.1.0"
