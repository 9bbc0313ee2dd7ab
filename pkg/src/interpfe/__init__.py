"""Interpolation-based immersed finite elements in 2D.

Background spaces (tensor B-splines, C0 Lagrange) are sampled at the nodes of
a boundary-fitted foreground triangulation; the resulting extraction matrix
``M`` turns foreground systems ``A, B`` into background systems
``K = M^T A M``, ``F = M^T B``.
"""
from .errors import (ArgumentError, CapabilityError, ConfigError, GeometryError,
                     InterpFEError, OutOfRangeError, PreconditionError, SolverError,
                     StageError)

__version__ = "0.1.0"

__all__ = ["ArgumentError", "CapabilityError", "ConfigError", "GeometryError", "InterpFEError",
           "OutOfRangeError", "PreconditionError", "SolverError", "StageError", "__version__"]
