"""Simulation toolkit for direct-RF DAC qubit control: synthesis, analog chain, metrics, qubit dynamics."""

__version__ = "0.1.0"
