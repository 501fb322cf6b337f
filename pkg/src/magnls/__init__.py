"""Magnetic nonlinear Schrödinger solvers, energy-law diagnostics and WKB tools."""

__version__ = "0.1.0"
