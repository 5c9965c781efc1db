"""Numerical toolkit for toric K-stability, Bergman approximations, energy
functionals and geometric flows on the invariant slice of P^1."""

from .errors import CsckError, NumericalError, ValidationError
from .io import TOOL_VERSION as __version__
from .p1metric import InvariantMetricP1, bump_family
from .polytope import box, build_polytope, halfspace, interval, simplex
from .stability import PLConvexFunction, futaki

__all__ = [
    "CsckError",
    "NumericalError",
    "ValidationError",
    "InvariantMetricP1",
    "bump_family",
    "box",
    "build_polytope",
    "halfspace",
    "interval",
    "simplex",
    "PLConvexFunction",
    "futaki",
    "__version__",
]
