"""Barrier-event probabilities of stochastic systems by Monte Carlo, PDE solving and physics-informed training."""

from .fields import GridSpec, ProbabilityField

__all__ = ["GridSpec", "ProbabilityField"]
__version__ = "0.1.0"
