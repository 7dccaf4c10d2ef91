"""Numerical laboratory for the inhomogeneous one-phase Stefan problem."""

__version__ = "0.1.0"
