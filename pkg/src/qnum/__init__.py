"""Convex rate/fidelity allocation for entanglement-distribution networks."""

from qnum.convexity import CertificateClass, ConvexityCertificate, certify, check_cond1, check_cond2
from qnum.measures import BUILTIN_MEASURES, MeasureModel, get_measure, register_measure, tabulated_measure
from qnum.network import (
    DomainError,
    LinkSpec,
    NetworkModel,
    PhysicalLinkParams,
    RouteSpec,
    ValidationError,
    build_network,
    load_scenario,
    surfnet_network,
)
from qnum.oracle import OracleConfig, grid_search
from qnum.solver import SolveResult, SolverConfig, SolveStatus, multistart_solve, solve, solve_scenario

__all__ = [
    "BUILTIN_MEASURES",
    "CertificateClass",
    "ConvexityCertificate",
    "DomainError",
    "LinkSpec",
    "MeasureModel",
    "NetworkModel",
    "OracleConfig",
    "PhysicalLinkParams",
    "RouteSpec",
    "SolveResult",
    "SolveStatus",
    "SolverConfig",
    "ValidationError",
    "build_network",
    "certify",
    "check_cond1",
    "check_cond2",
    "get_measure",
    "grid_search",
    "load_scenario",
    "multistart_solve",
    "register_measure",
    "solve",
    "solve_scenario",
    "surfnet_network",
    "tabulated_measure",
]
