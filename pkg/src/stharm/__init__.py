"""stharm: a numerical laboratory for level-set identities and integral
inequalities of spacetime-harmonic-type functions on discretized
three-dimensional initial data sets.

The package solves the quasilinear equation

    Lap_g u = (h - tr_g p) |grad u|_g

on a box with per-face boundary conditions, extracts level-set geometry,
and verifies a battery of pointwise identities, boundary lemmas, and an
integral inequality relating boundary data to bulk energy densities.
"""

__version__ = "0.1.0"
