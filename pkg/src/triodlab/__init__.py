"""Numerical laboratory for triple junctions under curve shortening flow and
their realization as sharp-interface limits of a vector-valued Allen-Cahn
equation."""

from .potential import (
    AngleTriple,
    ThreeWellPotential,
    gamma_distance,
    junction_angles,
    make_standard_symmetric,
    potential_by_name,
)

__all__ = [
    "AngleTriple",
    "ThreeWellPotential",
    "gamma_distance",
    "junction_angles",
    "make_standard_symmetric",
    "potential_by_name",
]
