"""Time-varying well-posed linear systems from perturbed passive cores."""

__version__ = "0.1.0"
