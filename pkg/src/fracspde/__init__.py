"""Finite-element Mittag-Leffler integrators for time-fractional SPDEs with jumps."""

__version__ = "0.1.0"
