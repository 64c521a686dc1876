"""Optimal screening bands for two-stage, budget-constrained allocation."""

__version__ = "0.1.0"
