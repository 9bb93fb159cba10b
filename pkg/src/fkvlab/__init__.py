"""Diffusive realization of fractional Kelvin-Voigt damping for coupled wave and beam systems."""

from __future__ import annotations

__version__ = "0.1.0"

from .assembly import Model, ModelSpec, build_mesh
from .errors import (
    AssemblyError,
    ConfigError,
    DomainError,
    FitError,
    FKVError,
    HypothesisError,
    NumericalError,
    ResolutionError,
)
from .evolution import EnergyTrace, make_initial_data, simulate, step_midpoint
from .frequency import decay_fit, resolvent_norm, spectrum_check, sweep_and_fit
from .kernel import FractionalParams, XiGrid, build_xi_grid, smallest_grid
from .operator import DiscreteOperator, StateVector, assemble_generator, build_operator, dissipation, energy

__all__ = [
    "AssemblyError", "ConfigError", "DiscreteOperator", "DomainError", "EnergyTrace", "FKVError", "FitError",
    "FractionalParams", "HypothesisError", "Model", "ModelSpec", "NumericalError", "ResolutionError",
    "StateVector", "XiGrid", "assemble_generator", "build_mesh", "build_operator", "build_xi_grid", "decay_fit",
    "dissipation", "energy", "make_initial_data", "resolvent_norm", "simulate", "smallest_grid",
    "spectrum_check", "step_midpoint", "sweep_and_fit",
]
