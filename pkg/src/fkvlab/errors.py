"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class FKVError(Exception):
    """Base class for every error raised by :mod:`fkvlab`."""


class DomainError(FKVError, ValueError):
    """A parameter lies outside its admissible range."""


class ResolutionError(FKVError):
    """A discretization cannot meet its accuracy contract."""

    def __init__(self, message: str, achieved: float):
        super().__init__(message)
        self.achieved = achieved


class AssemblyError(FKVError):
    """Mesh or matrix assembly failed (degenerate element, unfitted mesh, ...)."""


class HypothesisError(FKVError):
    """A standing hypothesis of the model (e.g. ``eta > 0``) is violated."""


class NumericalError(FKVError):
    """A solve, factorization or iteration failed."""


class FitError(FKVError):
    """Not enough usable data for a power-law fit."""


class ConfigError(FKVError):
    """Configuration text could not be parsed or validated."""
