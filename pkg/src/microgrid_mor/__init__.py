"""Droop-controlled inverter microgrid models and their reduction."""

__version__ = "0.1.0"
