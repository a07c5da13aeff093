"""Finite-time bit reset: master-equation engine, thermodynamic accounting and bound checks."""

__version__ = "0.1.0"
