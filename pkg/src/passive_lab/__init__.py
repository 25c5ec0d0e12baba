"""Simulation and verification of impedance-passive systems under monotone output feedback."""

__version__ = "0.1.0"
