"""Simulator and estimate auditor for the Keller-Segel-Stokes system with
porous-medium diffusion."""

__version__ = "0.1.0"
