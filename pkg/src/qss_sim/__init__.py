"""Simulation and finite-key analysis of source-independent quantum secret sharing
with entangled pairs and postmatching."""

__version__ = "0.1.0"
