"""Simulated randomized pair-occupation measurements of molecular ground
states and reconstruction of N-representable two-particle reduced density
matrices by semidefinite programming."""

__version__ = "0.1.0"
