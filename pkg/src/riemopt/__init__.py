"""Riemannian adaptive optimizers with Poincare-ball and Stiefel pipelines."""

__version__ = "0.1.0"
