"""
Stability Probe Module
======================
Sondes numériques de la stabilité du problème inverse h ↦ F(h):

- stabilité Hölder: couples (δ_j = ‖F(h_j) - F(h₀)‖, e_j = ‖h_j - h₀‖_{L²(γ)})
  pour des perturbations aléatoires de norme C¹ imposée, ajustement
  log e ≈ log C + α log δ et validation sur des couples réservés;
- unicité: plus petite distance entre mesures de champs distincts;
- compacité: convergence de (λ, u) quand h_k → h₀.
"""

import sys
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger
from tabulate import tabulate

ROOT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT_DIR))

from core.assembly import element_gradients, gradient_norms, quadrature_values
from core.domain import DiscreteDomain
from core.eigensolver import EigenSolveSettings, PLaplaceEigenSolver, RobinField, check_exponent
from core.errors import InsufficientData, InvalidParameter, ProbinError
from inverse.measurement import forward_measure, measurement_distance
from inverse.parameterization import RobinParameterization, gamma_c1_norm, gamma_l2_norm
from utils.helpers import parallel_map, spawn_seeds
from utils.statistics import loglog_fit

MIN_FIT_PAIRS = 5


@dataclass
class StabilityProbeResult:
    """Résultat de la sonde de stabilité."""
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    deltas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    errors: np.ndarray = field(default_factory=lambda: np.zeros(0))
    holdout_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    alpha_hat: float = 0.0
    intercept: float = 0.0
    r_squared: float = 0.0
    c0: float = 0.0
    bound_M: float = 0.0
    holdout_ok: Optional[bool] = None
    n_skipped: int = 0

    def bound(self, delta: np.ndarray) -> np.ndarray:
        """C₀ M^{1-α} δ^α."""
        return self.c0 * self.bound_M ** (1 - self.alpha_hat) * np.asarray(delta) ** self.alpha_hat

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'radius': self.radii,
            'delta': self.deltas,
            'error': self.errors,
            'holdout': self.holdout_mask.astype(int),
        })

    def fit_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            'alpha_hat': self.alpha_hat,
            'intercept': self.intercept,
            'r_squared': self.r_squared,
            'c0': self.c0,
            'M': self.bound_M,
            'holdout_ok': int(bool(self.holdout_ok)),
        }])

    def to_dict(self) -> Dict:
        return {
            'n_pairs': int(self.deltas.size),
            'n_holdout': int(self.holdout_mask.sum()),
            'n_skipped': self.n_skipped,
            'alpha_hat': round(self.alpha_hat, 6),
            'r_squared': round(self.r_squared, 6),
            'c0': self.c0,
            'M': self.bound_M,
            'holdout_ok': self.holdout_ok,
        }

    def print_report(self):
        """Affiche un rapport formaté."""
        print("\n" + "=" * 70)
        print("🎲 STABILITY PROBE REPORT")
        print("=" * 70)
        rows = [[f"{r:.3e}", f"{d:.3e}", f"{e:.3e}", "holdout" if hold else "fit"]
                for r, d, e, hold in zip(self.radii, self.deltas, self.errors, self.holdout_mask)]
        print(tabulate(rows, headers=["radius", "δ", "e", "role"], tablefmt="simple"))
        print(f"\n📊 α̂ = {self.alpha_hat:.4f} (R² = {self.r_squared:.4f}), C₀ = {self.c0:.4e}")
        verdict = "✅" if self.holdout_ok else ("n/a" if self.holdout_ok is None else "❌")
        print(f"   Holdout bound e ≤ C₀M^(1-α)δ^α: {verdict}")
        print("=" * 70)


def stability_probe(domain: DiscreteDomain, p: float, h0: RobinField, parameterization: RobinParameterization,
                    perturbation_radii: Sequence[float], bound_M: float,
                    settings: Optional[EigenSolveSettings] = None, seed: int = 0, max_workers: int = 1,
                    holdout_every: int = 4, c0_margin: float = 1.25) -> StabilityProbeResult:
    """
    Sonde de stabilité Hölder autour de h₀.

    Chaque rayon r produit une perturbation ξ aléatoire dans l'espace de la
    paramétrisation, normalisée à ‖ξ‖_{C¹(γ)} = r (r ≤ M). Les couples
    d'indice 1, 5, 9, … sont réservés à la validation de la borne.
    """
    p = check_exponent(p)
    radii = np.asarray(perturbation_radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise InvalidParameter("perturbation_radii must be a nonempty list")
    if np.any(radii < 0) or not np.all(np.isfinite(radii)):
        raise InvalidParameter("perturbation radii must be finite and nonnegative")
    if not bound_M > 0 or np.any(radii > bound_M):
        raise InvalidParameter(f"perturbation radii must not exceed M={bound_M}")

    design = parameterization.design_matrix(domain)
    h_values = h0.face_means(domain)
    base = forward_measure(domain, p, RobinField(h_values), settings)
    seeds = spawn_seeds(seed, radii.size)

    def perturb(index: int):
        radius = radii[index]
        if radius == 0:
            return None
        rng = np.random.default_rng(seeds[index])
        xi = design @ rng.standard_normal(design.shape[1])
        norm = gamma_c1_norm(domain, xi)
        if norm == 0:
            return None
        xi = xi * (radius / norm)
        candidate = h_values + xi
        if np.min(candidate) < parameterization.h_min:
            xi = -xi
            candidate = h_values + xi
            if np.min(candidate) < parameterization.h_min:
                return None
        try:
            measured = forward_measure(domain, p, RobinField(candidate), settings)
        except ProbinError as exc:
            logger.warning(f"⚠️ Perturbation {index} skipped ({exc.code})")
            return None
        return radius, measurement_distance(measured, base), gamma_l2_norm(domain, xi)

    outcomes = parallel_map(perturb, range(radii.size), max_workers)
    pairs = [o for o in outcomes if o is not None and o[1] > 0 and o[2] > 0]
    skipped = radii.size - len(pairs)
    if len(pairs) < MIN_FIT_PAIRS:
        raise InsufficientData(f"Only {len(pairs)} valid (δ, e) pair(s); at least {MIN_FIT_PAIRS} are needed")

    used_radii, deltas, errors = (np.array(column) for column in zip(*pairs))
    holdout = np.zeros(len(pairs), dtype=bool)
    if holdout_every > 0:
        candidate = (np.arange(len(pairs)) % holdout_every) == 1
        if np.sum(~candidate) >= MIN_FIT_PAIRS:
            holdout = candidate

    fit = loglog_fit(deltas[~holdout], errors[~holdout])
    scale = bound_M ** (1 - fit.slope) * deltas ** fit.slope
    c0 = c0_margin * float(np.max(errors[~holdout] / scale[~holdout]))
    holdout_ok = bool(np.all(errors[holdout] <= c0 * scale[holdout])) if holdout.any() else None

    result = StabilityProbeResult(
        radii=used_radii, deltas=deltas, errors=errors, holdout_mask=holdout,
        alpha_hat=fit.slope, intercept=fit.intercept, r_squared=fit.r_squared,
        c0=c0, bound_M=float(bound_M), holdout_ok=holdout_ok, n_skipped=skipped,
    )
    logger.info(f"🎲 Stability probe: α̂={fit.slope:.4f}, R²={fit.r_squared:.4f}, "
                f"{len(pairs)} pair(s), {skipped} skipped")
    return result


def uniqueness_probe(domain: DiscreteDomain, p: float, h_grid: Sequence[RobinField],
                     settings: Optional[EigenSolveSettings] = None, max_workers: int = 1) -> float:
    """min_{i≠j} ‖F(h_i) - F(h_j)‖ sur une grille de champs distincts."""
    fields = list(h_grid)
    if len(fields) < 2:
        raise InvalidParameter("uniqueness_probe needs at least two fields")
    measurements = parallel_map(lambda h: forward_measure(domain, p, h, settings), fields, max_workers)
    distances = [measurement_distance(measurements[i], measurements[j])
                 for i, j in combinations(range(len(fields)), 2)]
    smallest = float(min(distances))
    logger.info(f"📊 Uniqueness probe: min distance {smallest:.3e} over {len(distances)} pair(s)")
    return smallest


@dataclass
class CompactnessProbeResult:
    """Écarts |λ(h_k) - λ(h₀)| et ‖u_k - u₀‖_{W^{1,p}} pour h_k → h₀."""
    scales: np.ndarray
    eigenvalue_gaps: np.ndarray
    eigenfunction_gaps: np.ndarray

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.eigenvalue_gaps) < 0) and np.all(np.diff(self.eigenfunction_gaps) < 0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'scale': self.scales,
            'lambda_gap': self.eigenvalue_gaps,
            'u_gap': self.eigenfunction_gaps,
        })


def _w1p_distance(domain: DiscreteDomain, u: np.ndarray, v: np.ndarray, p: float) -> float:
    diff = u - v
    grad_part = np.sum(domain.element_volumes * gradient_norms(element_gradients(domain, diff)) ** p)
    value_part = np.sum(domain.quad_weights * np.abs(quadrature_values(domain, diff)) ** p)
    return float((grad_part + value_part) ** (1 / p))


def compactness_probe(domain: DiscreteDomain, p: float, h0: RobinField, direction: RobinField,
                      scales: Sequence[float],
                      settings: Optional[EigenSolveSettings] = None) -> CompactnessProbeResult:
    """Suit (λ, u) le long de h₀ + s_k ξ pour des échelles s_k décroissantes."""
    p = check_exponent(p)
    scales = np.asarray(scales, dtype=float)
    if scales.size < 2 or np.any(np.diff(scales) >= 0) or np.any(scales <= 0):
        raise InvalidParameter("scales must be positive and strictly decreasing")
    solver = PLaplaceEigenSolver(settings)
    reference = solver.solve(domain, p, h0)
    gaps, u_gaps = [], []
    for scale in scales:
        pair = solver.solve(domain, p, h0.perturbed(direction, scale), initial=reference.u)
        gaps.append(abs(pair.eigenvalue - reference.eigenvalue))
        u_gaps.append(_w1p_distance(domain, pair.u, reference.u, p))
    result = CompactnessProbeResult(scales, np.array(gaps), np.array(u_gaps))
    logger.info(f"📊 Compactness probe: monotone={result.monotone}")
    return result
