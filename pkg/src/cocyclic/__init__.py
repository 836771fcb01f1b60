"""Numerical lab for rank-one cocyclic perturbations of the shift."""

__version__ = "0.1.0"
