# Copyright optdesign authors
# SPDX-License-Identifier: AGPL-3.0-or-later

from .kkt import NumericalFailure
from .program import (
    Affine,
    Cone,
    ConeProgram,
    IrrationalBeta,
    NonNegCone,
    ProgramBuilder,
    SecondOrderCone,
    ZeroCone,
    geometric_mean_epigraph,
    hyperbolic_constraint,
    rationalize,
)
from .solver import (
    ConicSolution,
    ConicSolver,
    SolverSettings,
    Status,
    solve,
)

__all__ = [
    "Affine",
    "Cone",
    "ConeProgram",
    "ConicSolution",
    "ConicSolver",
    "IrrationalBeta",
    "NonNegCone",
    "NumericalFailure",
    "ProgramBuilder",
    "SecondOrderCone",
    "SolverSettings",
    "Status",
    "ZeroCone",
    "geometric_mean_epigraph",
    "hyperbolic_constraint",
    "rationalize",
    "solve",
]
