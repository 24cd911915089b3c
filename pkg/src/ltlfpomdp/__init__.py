"""Constrained POMDP planning with finite-trace temporal logic specifications."""

__version__ = "0.1.0"
