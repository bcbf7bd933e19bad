"""Hyperbolic codon language modelling: ball geometry, tree prototypes, heads and training."""

__version__ = "0.1.0"
