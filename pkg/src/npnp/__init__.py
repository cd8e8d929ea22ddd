"""Certified PnP via a barrier method on the dual of a level-1 SOS relaxation."""
from .errors import (
    DegenerateConfigurationError,
    ExtractionError,
    InsufficientDataError,
    NPnPError,
    UnboundedDualError,
)
from .geometry import Alignment, Correspondences, build_M, cost, recover_translation
from .solver import BarrierParams, SolveReport, Status, solve_pnp

__all__ = [
    "Alignment",
    "BarrierParams",
    "Correspondences",
    "DegenerateConfigurationError",
    "ExtractionError",
    "InsufficientDataError",
    "NPnPError",
    "SolveReport",
    "Status",
    "UnboundedDualError",
    "build_M",
    "cost",
    "recover_translation",
    "solve_pnp",
]
