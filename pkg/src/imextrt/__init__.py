"""Embedded IMEX Runge-Kutta integration for thermal radiative transfer."""

__version__ = "0.1.0"
