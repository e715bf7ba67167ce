"""Local pressure formulas for incompressible flow, with numerical checks."""

__version__ = "0.1.0"
