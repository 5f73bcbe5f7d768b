"""Entropy-relaxed optimal transport and the lambda-divergence family."""

__version__ = "0.1.0"
