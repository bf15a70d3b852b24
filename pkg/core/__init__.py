"""
Probin - Core Module
Maillages, assemblage éléments finis et solveur propre p-Laplacien
"""

from .errors import ProbinError, NoConvergence, ConfigError
from .domain import (
    BoundaryLabel, DiscreteDomain, DomainMode, ThicknessProfile, attach_coating,
    build_interval_domain, build_planar_domain, build_radial_domain,
)
from .eigensolver import (
    EigenSolveSettings, Eigenpair, PLaplaceEigenSolver, RobinField, boundary_flux,
    principal_eigenpair, two_phase_eigenpair,
)
from .sensitivity import lambda_derivative, solve_linearized


__all__ = [
    'ProbinError',
    'NoConvergence',
    'ConfigError',
    'BoundaryLabel',
    'DiscreteDomain',
    'DomainMode',
    'ThicknessProfile',
    'attach_coating',
    'build_interval_domain',
    'build_planar_domain',
    'build_radial_domain',
    'EigenSolveSettings',
    'Eigenpair',
    'PLaplaceEigenSolver',
    'RobinField',
    'boundary_flux',
    'principal_eigenpair',
    'two_phase_eigenpair',
    'lambda_derivative',
    'solve_linearized',
]
