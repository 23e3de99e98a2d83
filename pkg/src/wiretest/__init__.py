"""Simulation and optimization toolkit for a virtual wire testing machine."""

__version__ = "0.1.0"
