"""Numerical laboratory for collapsing Kähler-Ricci flow on fibered manifolds."""

__version__ = "0.1.0"
