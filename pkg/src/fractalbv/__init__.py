"""Certified computation of BV-type functionals on nested fractals.

The package rigorously encloses the pair mass G_{A,B}(r), the associated
radius-normalized functionals, and their heat-semigroup counterparts on
the Sierpinski gasket and the Vicsek set, exposing the log-periodic
structure of the rescaled quantities.
"""

from .errors import (
    AxiomViolation,
    CapExceeded,
    ConfigError,
    FractalBVError,
    InvariantViolation,
    PreconditionError,
)
from .ifs import (
    Cell,
    CellUnion,
    FractalSystem,
    Similitude,
    apply_word,
    boundary_points,
    build_preset,
    cells_at_level,
    make_union,
    neighbor_count_R,
    shared_point,
    vertex_graph,
)
from .measure import MassInterval, ball_mass, cell_bounding_ball, mc_ball_mass, mc_pair_mass, pair_mass

__version__ = "0.1.0"

__all__ = [
    "AxiomViolation",
    "CapExceeded",
    "Cell",
    "CellUnion",
    "ConfigError",
    "FractalBVError",
    "FractalSystem",
    "InvariantViolation",
    "MassInterval",
    "PreconditionError",
    "Similitude",
    "apply_word",
    "ball_mass",
    "boundary_points",
    "build_preset",
    "cell_bounding_ball",
    "cells_at_level",
    "make_union",
    "mc_ball_mass",
    "mc_pair_mass",
    "neighbor_count_R",
    "pair_mass",
    "shared_point",
    "vertex_graph",
    "__version__",
]
