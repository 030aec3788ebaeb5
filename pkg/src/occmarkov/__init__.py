"""Inhomogeneous semi-Markov occupancy models for buildings."""

__version__ = "0.1.0"
