"""Steady-state entanglement of two impurity spins coupled to a spin-valve quantum dot."""

__version__ = "0.1.0"
