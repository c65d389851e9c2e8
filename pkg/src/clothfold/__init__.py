"""Desk-scale cloth manipulation pipeline: simulate, perceive, learn, evaluate."""

__version__ = "0.1.0"

from .backend import backend_name

__all__ = ["backend_name", "__version__"]
