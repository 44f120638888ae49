"""Batch simulator for flow and transport in fractured porous media."""

__version__ = "0.1.0"
