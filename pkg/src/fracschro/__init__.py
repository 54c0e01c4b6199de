"""Spectral toolkit for the fractional Schrödinger equation ((-Delta_g)^s + V) u = f
on closed manifolds: forward solves, local source-to-solution maps, Runge
approximation and potential recovery."""

from .forward import OperatorMatrix, Potential, apply, assemble, solve, solve_adjoint
from .fractional import Field, analyze, apply_frac, l2_inner, sobolev_norm, synthesize
from .measurement import (
    MeasurementBundle,
    SourceBasis,
    apply_map,
    build_source_basis,
    discrete_ucp_margin,
    gram_matrix,
    integral_identity_residual,
)
from .spectral import Grid, Region, Spectrum, build_region, build_torus_spectrum, load_spectrum

__version__ = "0.1.0"

__all__ = [
    "Field",
    "Grid",
    "MeasurementBundle",
    "OperatorMatrix",
    "Potential",
    "Region",
    "SourceBasis",
    "Spectrum",
    "analyze",
    "apply",
    "apply_frac",
    "apply_map",
    "assemble",
    "build_region",
    "build_source_basis",
    "build_torus_spectrum",
    "discrete_ucp_margin",
    "gram_matrix",
    "integral_identity_residual",
    "l2_inner",
    "load_spectrum",
    "sobolev_norm",
    "solve",
    "solve_adjoint",
    "synthesize",
]
