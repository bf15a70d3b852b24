"""
Études de limites
=================
Balayages et fonctionnelles limites autour du problème de Robin:

- revêtement mince ε → 0: Λ₁(ε) → μ₁(h = ρ^{-(p-1)}), avec ordre fitté;
- p → 1 du coefficient effectif h_p = ρ^{-(p-1)} et classification p → ∞;
- continuité de p ↦ λ₁(p);
- quotients limites: L^∞ (p → ∞) et BV (p → 1) en 1D.
"""

import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from tabulate import tabulate

ROOT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT_DIR))

from core.assembly import element_gradients, gradient_norms
from core.domain import (
    BoundaryLabel, DiscreteDomain, DomainMode, ThicknessProfile, attach_coating,
)
from core.eigensolver import (
    EigenSolveSettings, PLaplaceEigenSolver, RobinField, _check_nodal_vector,
    check_exponent, two_phase_eigenpair,
)
from core.errors import DegenerateInput, InsufficientData, InvalidParameter
from studies.oracles import robin_eigenvalue
from utils.helpers import parallel_map, spawn_seeds
from utils.statistics import is_monotone, loglog_fit


class InfinityLimit(Enum):
    """Comportement de h_p = ρ^{-(p-1)} quand p → ∞."""
    NEUMANN_LIMIT = "neumann"       # ρ > 1: h_p → 0
    UNIT_LIMIT = "unit"             # ρ = 1: h_p ≡ 1
    DIRICHLET_LIMIT = "dirichlet"   # ρ < 1: h_p → ∞


@dataclass
class LimitScanResult:
    """Grille de paramètres et observables associées."""
    parameter_name: str
    grid: np.ndarray
    observables: Dict[str, np.ndarray]
    rate: Optional[float] = None
    rate_r_squared: Optional[float] = None
    max_jump: Optional[float] = None
    extras: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        steps = np.diff(self.grid)
        if self.grid.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
            raise InvalidParameter(f"{self.parameter_name} grid must be strictly monotone")
        for name, values in self.observables.items():
            values = np.asarray(values, dtype=float)
            if values.shape != self.grid.shape:
                raise InvalidParameter(f"Observable '{name}' does not match the grid")
            self.observables[name] = values

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({self.parameter_name: self.grid})
        for name, values in self.observables.items():
            frame[name] = values
        return frame

    def to_dict(self) -> Dict:
        return {
            'parameter': self.parameter_name,
            'n_points': int(self.grid.size),
            'rate': self.rate,
            'rate_r_squared': self.rate_r_squared,
            'max_jump': self.max_jump,
            **{k: v for k, v in self.extras.items() if np.isscalar(v) or v is None},
        }

    def print_report(self):
        """Affiche un rapport formaté."""
        print(f"\n📊 Scan over {self.parameter_name}")
        print(tabulate(self.to_frame(), headers="keys", floatfmt=".6e", showindex=False))
        if self.rate is not None:
            print(f"   fitted rate: {self.rate:.4f} (R² = {self.rate_r_squared:.4f})")
        if self.max_jump is not None:
            print(f"   max adjacent jump: {self.max_jump:.4e}")


# =============================================================================
# REVÊTEMENT MINCE
# =============================================================================

def effective_h(rho: ThicknessProfile, p: float) -> RobinField:
    """h = ρ^{-(p-1)} par face de γ."""
    p = check_exponent(p)
    return RobinField(rho.rho_values ** (-(p - 1)))


def coating_sweep(base: DiscreteDomain, rho: ThicknessProfile, p: float, epsilons: Sequence[float],
                  settings: Optional[EigenSolveSettings] = None, n_layer_cells: int = 4,
                  max_workers: int = 1, validate_limit: bool = True) -> LimitScanResult:
    """
    Λ₁(ε) du problème à deux phases pour chaque ε et écart à μ₁(ρ^{-(p-1)}).

    Les écarts inférieurs à 10× la tolérance du solveur sont exclus du fit de
    l'ordre de convergence.
    """
    p = check_exponent(p)
    epsilons = np.asarray(epsilons, dtype=float)
    if epsilons.size == 0 or np.any(epsilons <= 0) or np.any(np.diff(epsilons) >= 0):
        raise InvalidParameter("epsilons must be positive and strictly decreasing")
    settings = settings or EigenSolveSettings()
    solver = PLaplaceEigenSolver(settings)

    h_limit = effective_h(rho, p)
    mu = solver.solve(base, p, h_limit).eigenvalue
    extras: Dict[str, Any] = {'mu1': mu}
    if validate_limit:
        extras['limit_validated'] = _validate_limit(base, p, h_limit, mu, solver)

    def one(epsilon: float):
        coated = attach_coating(base, rho, epsilon, n_layer_cells)
        result = two_phase_eigenpair(coated, p, solver=solver)
        return result.eigenvalue, result.coating_mass

    values = parallel_map(one, epsilons.tolist(), max_workers)
    lambdas, masses = (np.array(column) for column in zip(*values))
    gaps = np.abs(lambdas - mu)

    rate, r_squared = None, None
    floor = 10 * settings.tol_lambda * mu
    usable = gaps >= floor
    if usable.sum() >= 2:
        fit = loglog_fit(epsilons[usable], gaps[usable])
        rate, r_squared = fit.slope, fit.r_squared
    else:
        logger.warning(f"⚠️ Fewer than two gaps above the solver floor {floor:.1e}: no rate fitted")
    extras['gap_monotone'] = is_monotone(gaps, decreasing=True, strict=True)
    extras['max_coating_mass'] = float(masses.max())

    logger.info(f"📊 Coating sweep: μ₁={mu:.10g}, rate={rate}, monotone={extras['gap_monotone']}")
    return LimitScanResult(
        parameter_name='epsilon', grid=epsilons,
        observables={'Lambda1': lambdas, 'coating_mass': masses, 'mu1': np.full(epsilons.size, mu),
                     'abs_gap': gaps},
        rate=rate, rate_r_squared=r_squared, extras=extras,
    )


def _validate_limit(base: DiscreteDomain, p: float, h_limit: RobinField, mu: float,
                    solver: PLaplaceEigenSolver) -> bool:
    """Encadrement par monotonie en h (et oracle 1D pour p = 2)."""
    lower = solver.solve(base, p, h_limit.scaled(0.5)).eigenvalue
    upper = solver.solve(base, p, h_limit.scaled(2.0)).eigenvalue
    ok = lower <= mu <= upper
    if ok and p == 2 and base.mode == DomainMode.INTERVAL and np.ptp(h_limit.values) == 0 \
            and base.partition.robin_faces.size == 1:
        reference = robin_eigenvalue(float(h_limit.values[0]))
        ok = abs(mu - reference) <= 1e-3 * reference
    if not ok:
        logger.warning(f"⚠️ Limit eigenvalue μ₁={mu:.10g} failed validation")
    return bool(ok)


# =============================================================================
# LIMITES EN p
# =============================================================================

def p_limit_scan_one(rho_values: Sequence[float], p_grid: Sequence[float]) -> LimitScanResult:
    """Écart |ρ^{-(p-1)} - 1| quand p → 1 (forme fermée, sans solveur)."""
    rho = np.asarray(rho_values, dtype=float)
    grid = np.asarray(p_grid, dtype=float)
    if rho.size == 0 or np.any(rho <= 0):
        raise InvalidParameter("rho values must be > 0")
    if grid.size == 0 or np.any(grid <= 1) or np.any(grid > 2) or np.any(np.diff(grid) >= 0):
        raise InvalidParameter("p_grid must lie in (1, 2] and decrease strictly")
    deviations = np.abs(rho[None, :] ** (-(grid[:, None] - 1)) - 1)
    observables = {f"deviation_rho={r:g}": deviations[:, j] for j, r in enumerate(rho)}
    observables['sup_deviation'] = deviations.max(axis=1)
    rate, r_squared = None, None
    if grid.size >= 2 and np.all(observables['sup_deviation'] > 0):
        fit = loglog_fit(grid - 1, observables['sup_deviation'])
        rate, r_squared = fit.slope, fit.r_squared
    return LimitScanResult('p', grid, observables, rate=rate, rate_r_squared=r_squared)


def p_limit_classify_inf(rho_value: float, p_grid: Optional[Sequence[float]] = None) -> InfinityLimit:
    """Classe le comportement de h_p = ρ^{-(p-1)} sur une grille croissante de p."""
    if rho_value <= 0:
        raise InvalidParameter("rho must be > 0")
    grid = np.asarray(p_grid if p_grid is not None else [2.0, 4.0, 8.0, 16.0, 32.0], dtype=float)
    values = rho_value ** (-(grid - 1))
    if np.all(np.abs(values - 1) <= 1e-12):
        return InfinityLimit.UNIT_LIMIT
    if is_monotone(values, decreasing=True):
        return InfinityLimit.NEUMANN_LIMIT
    return InfinityLimit.DIRICHLET_LIMIT


def p_continuity_scan(domain: DiscreteDomain, h: RobinField, p0: float, p_grid: Sequence[float],
                      settings: Optional[EigenSolveSettings] = None, max_workers: int = 1) -> LimitScanResult:
    """
    λ₁(p) sur une grille autour de p0. Un saut |λ_{i+1} - λ_i| est anormal
    s'il dépasse 5× la moyenne des sauts voisins.
    """
    check_exponent(p0)
    grid = np.asarray(p_grid, dtype=float)
    if grid.size == 0:
        raise InvalidParameter("p_grid must be nonempty")
    for p in grid:
        check_exponent(p)
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise InvalidParameter("p_grid must increase strictly")
    settings = settings or EigenSolveSettings()
    seeds = spawn_seeds(settings.seed, grid.size)

    def one(index: int) -> float:
        local = EigenSolveSettings(**{**settings.to_dict(), 'seed': seeds[index]})
        return PLaplaceEigenSolver(local).solve(domain, grid[index], h).eigenvalue

    lambdas = np.array(parallel_map(one, range(grid.size), max_workers))
    extras: Dict[str, Any] = {'p0': float(p0)}
    max_jump = None
    if grid.size > 1:
        jumps = np.abs(np.diff(lambdas))
        max_jump = float(jumps.max())
        if jumps.size >= 3:
            predicted = np.array([np.mean(jumps[max(0, i - 1):i].tolist() + jumps[i + 1:i + 2].tolist())
                                  for i in range(jumps.size)])
            extras['continuity_ok'] = bool(np.all(jumps <= 5 * predicted))
    logger.info(f"📊 p-continuity scan: {grid.size} point(s), max jump={max_jump}")
    return LimitScanResult('p', grid, {'lambda1': lambdas}, max_jump=max_jump, extras=extras)


# =============================================================================
# QUOTIENT L^∞ (p → ∞)
# =============================================================================

def linf_rayleigh_eval(u: np.ndarray, domain: DiscreteDomain) -> float:
    """max(‖∇u‖_∞, ‖u‖_{L^∞(γ)}) / ‖u‖_∞, invariant par changement d'échelle."""
    u = _check_nodal_vector(domain, u)
    amplitude = float(np.max(np.abs(u)))
    if amplitude == 0:
        raise DegenerateInput("L∞ quotient of the zero function")
    v = u / amplitude
    gradient = float(gradient_norms(element_gradients(domain, v)).max())
    trace = float(np.max(np.abs(v[domain.robin_nodes]))) if domain.robin_nodes.size else 0.0
    return max(gradient, trace)


def linf_knee_search(domain: DiscreteDomain, positions: Sequence[float],
                     heights: Sequence[float]) -> Tuple[float, Tuple[float, float]]:
    """
    Minimise le quotient L^∞ sur les profils linéaires par morceaux passant
    par (0, 0), (a, b) et (1, 1) (intervalle, Γ_D en 0, γ en 1).
    """
    if domain.mode != DomainMode.INTERVAL:
        raise InvalidParameter("linf_knee_search runs on the interval domain")
    x = domain.nodes[:, 0]
    best_value, best_knee = np.inf, (np.nan, np.nan)
    for a in positions:
        if not 0 < a < 1:
            raise InvalidParameter("knee positions must lie in (0, 1)")
        for b in heights:
            profile = np.interp(x, [0.0, a, 1.0], [0.0, b, 1.0])
            value = linf_rayleigh_eval(profile, domain)
            if value < best_value:
                best_value, best_knee = value, (float(a), float(b))
    return best_value, best_knee


# =============================================================================
# QUOTIENT BV (p → 1)
# =============================================================================

@dataclass
class BVProfile:
    """
    Fonction linéaire par morceaux, éventuellement discontinue aux nœuds:
    sur [knots[i], knots[i+1]] elle va de left_values[i] à right_values[i].
    """
    knots: np.ndarray
    left_values: np.ndarray
    right_values: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.left_values = np.asarray(self.left_values, dtype=float)
        self.right_values = np.asarray(self.right_values, dtype=float)
        n_segments = self.knots.size - 1
        if n_segments < 1 or np.any(np.diff(self.knots) <= 0):
            raise InvalidParameter("BV profile knots must increase strictly")
        if self.left_values.shape != (n_segments,) or self.right_values.shape != (n_segments,):
            raise InvalidParameter("BV profile needs one (left, right) pair per segment")

    @classmethod
    def step(cls, position: float, height: float = 1.0, start: float = 0.0, end: float = 1.0) -> "BVProfile":
        """0 sur (start, a), ``height`` sur (a, end)."""
        if not start <= position < end:
            raise InvalidParameter("step position must lie in [start, end)")
        if position == start:
            return cls([start, end], [height], [height])
        return cls([start, position, end], [0.0, height], [0.0, height])

    @classmethod
    def from_nodal(cls, domain: DiscreteDomain, u: np.ndarray) -> "BVProfile":
        x = domain.nodes[:, 0]
        order = np.argsort(x)
        values = np.asarray(u, dtype=float)[order]
        return cls(x[order], values[:-1], values[1:])

    def absolute_integral(self) -> float:
        """∫|u| exact (changement de signe traité sur chaque segment)."""
        total = 0.0
        for width, a, b in zip(np.diff(self.knots), self.left_values, self.right_values):
            if a * b >= 0:
                total += 0.5 * width * (abs(a) + abs(b))
            else:
                total += 0.5 * width * (a * a + b * b) / (abs(a) + abs(b))
        return total

    def total_variation(self) -> float:
        """Variation intérieure: pentes des segments et sauts aux nœuds intérieurs."""
        slopes = np.abs(self.right_values - self.left_values).sum()
        jumps = np.abs(self.left_values[1:] - self.right_values[:-1]).sum()
        return float(slopes + jumps)


def bv_quotient_eval(candidate: BVProfile, domain: DiscreteDomain, h: float = 1.0) -> float:
    """
    (|Du|(Ω) + ∫_{Γ_D}|u| + ∫_γ h|u|) / ∫|u| sur l'intervalle: la trace sur
    Γ_D compte comme un saut vers 0.
    """
    if domain.mode != DomainMode.INTERVAL:
        raise InvalidParameter("bv_quotient_eval runs on the interval domain")
    if h < 0:
        raise InvalidParameter("h must be nonnegative")
    x = domain.nodes[:, 0]
    start, end = float(x.min()), float(x.max())
    if not (np.isclose(candidate.knots[0], start) and np.isclose(candidate.knots[-1], end)):
        raise InvalidParameter("BV profile must span the whole interval")
    denominator = candidate.absolute_integral()
    if denominator == 0:
        raise DegenerateInput("BV quotient of the zero function")

    traces = {start: abs(candidate.left_values[0]), end: abs(candidate.right_values[-1])}
    boundary = 0.0
    for face, label in zip(domain.face_nodes[:, 0], domain.face_labels):
        position = start if x[face] == start else end
        weight = h if label == int(BoundaryLabel.ROBIN) else 1.0
        boundary += weight * traces[position]
    return (candidate.total_variation() + boundary) / denominator


def bv_step_minimum(domain: DiscreteDomain, positions: Sequence[float],
                    h: float = 1.0) -> Tuple[float, float]:
    """Minimum du quotient BV sur les marches 1_{(a, 1)}."""
    best_value, best_position = np.inf, np.nan
    for a in positions:
        value = bv_quotient_eval(BVProfile.step(float(a)), domain, h)
        if value < best_value:
            best_value, best_position = value, float(a)
    return best_value, best_position


def bv_trend(domain: DiscreteDomain, p_values: Sequence[float], h: float = 1.0,
             settings: Optional[EigenSolveSettings] = None,
             positions: Optional[Sequence[float]] = None) -> LimitScanResult:
    """λ₁(p) pour p → 1 comparé au niveau BV des marches."""
    grid = np.asarray(p_values, dtype=float)
    if grid.size < 2 or np.any(np.diff(grid) >= 0):
        raise InsufficientData("bv_trend needs at least two strictly decreasing p values")
    level, _ = bv_step_minimum(domain, positions if positions is not None else np.linspace(0, 0.9, 10), h)
    solver = PLaplaceEigenSolver(settings)
    field_h = RobinField.constant(domain, h)
    lambdas = np.array([solver.solve(domain, p, field_h).eigenvalue for p in grid])
    gaps = np.abs(lambdas - level)
    extras = {'bv_level': level, 'gap_monotone': is_monotone(gaps, decreasing=True, strict=True)}
    logger.info(f"📊 BV trend: level={level:.6g}, gaps={np.array2string(gaps, precision=4)}")
    return LimitScanResult('p', grid, {'lambda1': lambdas, 'bv_level': np.full(grid.size, level),
                                       'abs_gap': gaps}, extras=extras)
