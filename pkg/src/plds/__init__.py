"""Limit cycles and bifurcations of planar piecewise linear Lienard-type systems.

The system is ``x' = y - phi(x)``, ``y' = beta - alpha*x - y`` with ``phi``
piecewise linear: ascending pieces of slope ``k1`` alternating with dropping
pieces of slope ``-k2``. Trajectories are sewn from the exact solutions of the
linear pieces.
"""

from .bifurcation import (
    BifurcationDiagram,
    CellOptions,
    CellReport,
    alpha_star,
    analyze_cell,
    beta_invariance_check,
    find_separatrix_loop,
    scan_diagram,
    separatrix_slopes,
    verify_bound,
)
from .errors import PldsError
from .model import PwlCurve, SingularKind, SystemParams, build_curve, discriminant_curve, find_singular_points
from .returnmap import LimitCycle, build_return_map, find_limit_cycles, search_cycles
from .sewing import Section, SewedSystem, Side, sew_trajectory

__version__ = "0.1.0"

__all__ = [
    "BifurcationDiagram",
    "CellOptions",
    "CellReport",
    "LimitCycle",
    "PldsError",
    "PwlCurve",
    "Section",
    "SewedSystem",
    "Side",
    "SingularKind",
    "SystemParams",
    "alpha_star",
    "analyze_cell",
    "beta_invariance_check",
    "build_curve",
    "build_return_map",
    "discriminant_curve",
    "find_limit_cycles",
    "find_separatrix_loop",
    "find_singular_points",
    "scan_diagram",
    "search_cycles",
    "separatrix_slopes",
    "sew_trajectory",
    "verify_bound",
]
