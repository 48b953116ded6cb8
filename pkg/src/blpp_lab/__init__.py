"""Numerical laboratory for Brownian and geometric last passage percolation
with functional initial conditions.

The package evaluates the determinantal (Fredholm) formulas for the
finite-dimensional laws of last passage times and checks them against Monte
Carlo simulation, exhaustive enumeration and closed-form oracles.
"""

__version__ = "0.1.0"
