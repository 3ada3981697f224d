"""Sparse recovery lab: Basis Pursuit, l0 search, LASSO, recovery conditions and random ensembles."""

__version__ = "0.1.0"
