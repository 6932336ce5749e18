"""Neumann problem for the p-Laplacian on weighted metric graphs.

Minimizes ``sum_e omega_e |du / len_e|^p + sum_z u f P`` over mean-zero node
fields and probes the solutions with De Giorgi-type estimates.
"""

from .analysis import (
    DeGiorgiParams,
    ExponentConfig,
    LevelSetStats,
    TheoryInapplicable,
    boundedness_iteration,
    check_degiorgi,
    compute_exponents,
    cutoff,
    level_set_stats,
    natural_boundary_check,
    oscillation_decay,
    subminimizer_check,
)
from .domains import DomainSpec, generate, make_boundary_data
from .kernels import BACKEND
from .solver import (
    CompatibilityError,
    ConvergenceError,
    NeumannProblem,
    Solution,
    SolverOptions,
    assemble,
    oracle_minimize,
    solve,
    verify_minimizer_set,
)
from .space import Domain, DomainError, MetricGraph, SpaceDiagnostics, diagnose, load_domain

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CompatibilityError",
    "ConvergenceError",
    "DeGiorgiParams",
    "Domain",
    "DomainError",
    "DomainSpec",
    "ExponentConfig",
    "LevelSetStats",
    "MetricGraph",
    "NeumannProblem",
    "Solution",
    "SolverOptions",
    "SpaceDiagnostics",
    "TheoryInapplicable",
    "assemble",
    "boundedness_iteration",
    "check_degiorgi",
    "compute_exponents",
    "cutoff",
    "diagnose",
    "generate",
    "level_set_stats",
    "load_domain",
    "make_boundary_data",
    "natural_boundary_check",
    "oracle_minimize",
    "oscillation_decay",
    "solve",
    "subminimizer_check",
    "verify_minimizer_set",
]
