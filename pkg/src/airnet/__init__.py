"""Deterministic emulator for cooperative UAV networking experiments."""

__version__ = "0.1.0"
