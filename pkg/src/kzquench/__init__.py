"""Kibble-Zurek quench simulations of Ising and 3-state Potts chains."""

__version__ = "0.1.0"
