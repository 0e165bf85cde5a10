"""Cargo distribution planning: graph abstraction, spectral regions, Tabu VRP."""

__version__ = "0.1.0"
