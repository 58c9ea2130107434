"""Stochastic density matrices: PDF approximation by weighted quadratic forms of basis functions."""

__version__ = "0.1.0"
