"""Quantum-classical hybrid image classifiers on a numpy statevector simulator."""

__version__ = "0.1.0"
