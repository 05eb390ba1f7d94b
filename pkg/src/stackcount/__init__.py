"""Stacked-object counting toolkit: synthetic scenes, rendering, carving, occupancy."""

__version__ = "0.1.0"
