"""Feedback stabilization of parabolic equations: FEM, Riccati feedback and experiments."""

__version__ = "0.1.0"
