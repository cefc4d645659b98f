"""Simulation engine for an arm inductor-less modular multilevel converter."""

__version__ = "0.1.0"
