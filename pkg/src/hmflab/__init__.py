"""Numerical laboratory for inhomogeneous steady states of the HMF kinetic model."""

__version__ = "0.1.0"
