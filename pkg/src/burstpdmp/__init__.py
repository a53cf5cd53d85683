"""Simulation and numerical checks for a bursting gene-expression model with fast mRNA."""

__version__ = "0.1.0"
