"""Discretization, spectral analysis and qualitative audits for the logarithmic Laplacian."""

from __future__ import annotations

from .assembly import FormMatrices, assemble_alt, assemble_def, pair_integral, small_measure_threshold
from .audit import AuditEntry
from .geometry import Ball, DiscreteField, Domain, Ellipse, Grid, ReflectionFrame, Rect, build_grid
from .kernel import KernelConstants, QuadratureSpec, constants
from .solve import Nonlinearity, solve_poisson, solve_semilinear, solve_torsion
from .spectral import eigs, lambda1

__version__ = "0.1.0"

__all__ = [
    "AuditEntry",
    "Ball",
    "DiscreteField",
    "Domain",
    "Ellipse",
    "FormMatrices",
    "Grid",
    "KernelConstants",
    "Nonlinearity",
    "QuadratureSpec",
    "Rect",
    "ReflectionFrame",
    "assemble_alt",
    "assemble_def",
    "build_grid",
    "constants",
    "eigs",
    "lambda1",
    "pair_integral",
    "small_measure_threshold",
    "solve_poisson",
    "solve_semilinear",
    "solve_torsion",
]
