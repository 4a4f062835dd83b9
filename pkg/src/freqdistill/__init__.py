"""Spectral GNN-to-MLP distillation bench."""

__version__ = "0.1.0"
