"""Shifted Polya tree ensemble priors for Bayesian density estimation on [0, 1)."""

__version__ = "0.1.0"
