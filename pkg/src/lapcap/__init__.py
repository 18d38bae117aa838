"""Structural diagnostics for causal mechanisms, compositional analogies and
gradient interference."""

__version__ = "0.1.0"
