"""Finite-element laboratory for Neumann/Dirichlet eigenvalue interlacing."""
__version__ = "0.1.0"
