"""Frobenius machinery for Cartan geometries: curvature jets, Killing generators,
local Killing fields, local automorphisms, the bundle BCH formula and symmetry strata."""

__version__ = "1.0.0"
