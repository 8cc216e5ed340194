"""Simulation and verification toolkit for a kernel-coupled multistate contact
process on the discrete torus: exact event-driven dynamics, the matching
per-state density ODE, and statistical checks of the scaling behaviour."""

__version__ = "0.1.0"
