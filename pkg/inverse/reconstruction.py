"""
Reconstruction de h
===================
Gauss-Newton projeté sur les coefficients c de la paramétrisation:

    min_c ½ ‖W^{1/2}(F(h(c)) - data)‖²

avec W = 1 pour λ et W = mesure des faces pour les flux. Le jacobien est
obtenu colonne par colonne à partir du système linéarisé (p ≥ 2). Un terme
de Tikhonov optionnel ½α‖c - c_init‖² stabilise la reconstruction bruitée.

Inclut le modèle de bruit, l'étude Monte Carlo sur bruit et le choix du
poids par principe de discrépance.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from loguru import logger

ROOT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT_DIR))

from core.domain import DiscreteDomain
from core.eigensolver import EigenSolveSettings, Eigenpair, RobinField, check_exponent
from core.errors import InvalidParameter, NoDescentDirection, ProbinError
from core.sensitivity import lambda_derivative, solve_linearized
from inverse.measurement import Measurement, measure_with_pair
from inverse.parameterization import RobinParameterization
from utils.artifacts import write_csv
from utils.helpers import parallel_map, spawn_seeds


# =============================================================================
# BRUIT
# =============================================================================

@dataclass
class NoiseModel:
    """
    Bruit gaussien additif: écart-type flux_level·rms(q) sur chaque flux,
    lambda_level·|λ| sur la valeur propre.
    """
    flux_level: float = 0.0
    lambda_level: float = 0.0

    def __post_init__(self):
        if self.flux_level < 0 or self.lambda_level < 0:
            raise InvalidParameter("Noise levels must be nonnegative")

    def apply(self, measurement: Measurement, rng: np.random.Generator) -> Measurement:
        flux = measurement.flux_trace
        scale = float(np.sqrt(np.mean(flux ** 2))) if flux.size else 0.0
        noisy_flux = flux + self.flux_level * scale * rng.standard_normal(flux.size)
        noisy_lambda = measurement.eigenvalue * (1.0 + self.lambda_level * rng.standard_normal())
        return measurement.with_values(noisy_lambda, noisy_flux)

    def expected_misfit(self, measurement: Measurement) -> float:
        """Taille attendue sqrt(E[rᵀWr]) du bruit dans la norme pondérée."""
        flux = measurement.flux_trace
        scale = float(np.sqrt(np.mean(flux ** 2))) if flux.size else 0.0
        flux_part = np.sum(measurement.face_weights) * (self.flux_level * scale) ** 2
        lambda_part = (self.lambda_level * measurement.eigenvalue) ** 2
        return float(np.sqrt(flux_part + lambda_part))


# =============================================================================
# RÉSULTATS
# =============================================================================

@dataclass
class ReconstructionSettings:
    """Paramètres de Gauss-Newton."""
    max_iter: int = 30
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    alpha_min: float = 1e-6
    misfit_tol: float = 1e-13
    stagnation_tol: float = 1e-10
    step_tol: float = 1e-12
    max_workers: int = 1
    delta_reg: Optional[float] = None
    solver: EigenSolveSettings = field(default_factory=EigenSolveSettings)

    @classmethod
    def from_config(cls, config: dict, solver: Optional[EigenSolveSettings] = None,
                    max_workers: int = 1) -> "ReconstructionSettings":
        section = config.get('inverse', {})
        delta = section.get('delta_reg')
        return cls(
            max_iter=int(section.get('max_iter', 30)),
            armijo_c=float(section.get('armijo_c', 1e-4)),
            misfit_tol=float(section.get('misfit_tol', 1e-13)),
            stagnation_tol=float(section.get('stagnation_tol', 1e-10)),
            max_workers=max_workers,
            delta_reg=None if delta is None else float(delta),
            solver=solver or EigenSolveSettings.from_config(config),
        )


@dataclass(eq=False)
class ReconstructionResult:
    """Coefficients reconstruits et historique des itérations acceptées."""
    c_hat: np.ndarray
    h_hat: RobinField
    residual_history: List[float]
    step_norms: List[float]
    regularization_weight: float
    converged: bool
    iterations: int
    stop_reason: str = ""

    @property
    def final_misfit(self) -> float:
        return self.residual_history[-1]

    def to_frame(self) -> pd.DataFrame:
        steps = [np.nan] + list(self.step_norms)
        return pd.DataFrame({
            'iteration': np.arange(len(self.residual_history)),
            'misfit': self.residual_history,
            'step_norm': steps,
            'reg_weight': self.regularization_weight,
        })

    def to_dict(self) -> dict:
        return {
            'c_hat': self.c_hat.tolist(),
            'final_misfit': self.final_misfit,
            'iterations': self.iterations,
            'converged': self.converged,
            'regularization_weight': self.regularization_weight,
            'stop_reason': self.stop_reason,
        }


# =============================================================================
# JACOBIEN
# =============================================================================

def jacobian(domain: DiscreteDomain, p: float, h0: RobinField, parameterization: RobinParameterization,
             base: Optional[Eigenpair] = None, face_ids: Optional[np.ndarray] = None,
             settings: Optional[EigenSolveSettings] = None, max_workers: int = 1,
             delta_reg: Optional[float] = None) -> np.ndarray:
    """
    J ∈ ℝ^{(1+F)×k}: ligne 0 = λ'[φ_j], lignes suivantes = flux de u'[φ_j]
    sur les faces ``face_ids`` de Γ_D (toutes les faces valides par défaut).
    """
    if base is None:
        measurement, base = measure_with_pair(domain, p, h0, settings)
        face_ids = measurement.face_ids if face_ids is None else face_ids
    design = parameterization.design_matrix(domain)

    def column(j: int) -> np.ndarray:
        xi = RobinField.direction(design[:, j])
        linearized = solve_linearized(domain, p, h0, base, xi, delta_reg=delta_reg)
        trace = linearized.dirichlet_flux
        lookup = dict(zip(trace.face_ids.tolist(), trace.face_values.tolist()))
        ids = face_ids if face_ids is not None else trace.face_ids[trace.valid_faces]
        return np.concatenate([[lambda_derivative(base, xi, domain)], [lookup[int(f)] for f in ids]])

    columns = parallel_map(column, range(parameterization.k), max_workers)
    return np.column_stack(columns)


# =============================================================================
# GAUSS-NEWTON
# =============================================================================

def _weighted_misfit(residual: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(np.sum(weights * residual ** 2)))


# Marge au-dessus du plancher du solveur direct en dessous de laquelle
# l'absence de pas d'Armijo vaut convergence
SOLVER_FLOOR_FACTOR = 100.0


def solver_misfit_floor(data: Measurement, solver: EigenSolveSettings) -> float:
    """
    Misfit atteignable avec les tolérances du solveur direct: tol_lambda·|λ|
    sur la valeur propre, tol_u·|q| sur chaque flux.
    """
    accuracy = np.concatenate([[solver.tol_lambda], np.full(data.flux_trace.size, solver.tol_u)])
    return _weighted_misfit(accuracy * np.abs(data.as_vector()), data.weights_vector())


def gauss_newton_reconstruct(domain: DiscreteDomain, p: float, data: Measurement,
                             parameterization: RobinParameterization, h_init: RobinField,
                             reg_weight: float = 0.0, noise_model: Optional[NoiseModel] = None,
                             settings: Optional[ReconstructionSettings] = None) -> ReconstructionResult:
    """
    Gauss-Newton projeté (c ≥ h_min) avec recherche linéaire d'Armijo sur

        ½‖W^{1/2}(data - F(h(c)))‖² + ½ reg_weight ‖c - c_init‖².

    ``noise_model`` sert uniquement au diagnostic: le misfit final est comparé
    au niveau de bruit attendu.
    """
    p = check_exponent(p)
    if p != data.p:
        raise InvalidParameter(f"Data were measured with p={data.p}, not p={p}")
    if reg_weight < 0:
        raise InvalidParameter("reg_weight must be nonnegative")
    settings = settings or ReconstructionSettings()
    target = data.as_vector()
    weights = data.weights_vector()

    def evaluate(coefficients: np.ndarray, initial: Optional[np.ndarray] = None):
        h = parameterization.synthesize(domain, coefficients)
        measurement, pair = measure_with_pair(domain, p, h, settings.solver, initial=initial)
        if measurement.face_ids.shape != data.face_ids.shape or np.any(measurement.face_ids != data.face_ids):
            raise InvalidParameter("Forward flux faces do not match the data faces")
        residual = target - measurement.as_vector()
        return h, pair, residual, _weighted_misfit(residual, weights)

    c = parameterization.project(parameterization.coefficients_from(domain, h_init))
    reference = c.copy()

    def objective(coefficients: np.ndarray, misfit_value: float) -> float:
        return 0.5 * misfit_value ** 2 + 0.5 * reg_weight * float(np.sum((coefficients - reference) ** 2))

    floor = solver_misfit_floor(data, settings.solver)
    h, pair, residual, misfit = evaluate(c)
    history, steps = [misfit], []

    def result(converged: bool, reason: str) -> ReconstructionResult:
        return ReconstructionResult(
            c_hat=c.copy(), h_hat=h, residual_history=list(history), step_norms=list(steps),
            regularization_weight=float(reg_weight), converged=converged, iterations=len(steps),
            stop_reason=reason,
        )

    if misfit <= max(settings.misfit_tol, floor):
        logger.info("✅ Initial guess already fits the data")
        return result(True, "misfit")

    converged, reason = False, "max_iter"
    for iteration in range(1, settings.max_iter + 1):
        J = jacobian(domain, p, h, parameterization, base=pair, face_ids=data.face_ids,
                     max_workers=settings.max_workers, delta_reg=settings.delta_reg)
        # direction de plus forte descente de l'objectif
        descent = J.T @ (weights * residual) - reg_weight * (c - reference)
        normal = J.T @ (weights[:, None] * J) + reg_weight * np.eye(parameterization.k)
        try:
            step = np.linalg.solve(normal, descent)
        except np.linalg.LinAlgError:
            raise NoDescentDirection("Gauss-Newton normal equations are singular", best=result(False, "singular"))
        predicted = float(descent @ step)
        current = objective(c, misfit)

        alpha, accepted = 1.0, None
        while alpha >= settings.alpha_min:
            trial = parameterization.project(c + alpha * step)
            displacement = trial - c
            if not np.any(displacement):
                break
            try:
                state = evaluate(trial, initial=pair.u)
            except ProbinError as exc:
                logger.debug(f"GN trial rejected ({exc.code}) at α={alpha:g}")
                alpha *= settings.backtrack
                continue
            if objective(trial, state[3]) <= current - settings.armijo_c * float(descent @ displacement):
                accepted = (trial, state, float(np.linalg.norm(displacement)))
                break
            alpha *= settings.backtrack

        if accepted is None:
            if predicted <= 1e-8 * current or not np.any(parameterization.project(c + step) - c):
                converged, reason = True, "stationary"
                break
            if misfit <= SOLVER_FLOOR_FACTOR * floor:
                logger.debug(f"GN {iteration}: misfit {misfit:.3e} at the forward solver floor {floor:.3e}")
                converged, reason = True, "solver_floor"
                break
            raise NoDescentDirection(f"No Armijo step found at iteration {iteration}",
                                     best=result(False, "no_descent"))

        c, (h, pair, residual, misfit), step_norm = accepted
        steps.append(step_norm)
        history.append(misfit)
        updated = objective(c, misfit)
        logger.debug(f"GN {iteration}: misfit={misfit:.6e} |Δc|={step_norm:.3e} α={alpha:g}")

        if misfit <= max(settings.misfit_tol, floor):
            converged, reason = True, "misfit"
            break
        if current - updated <= settings.stagnation_tol * current:
            converged, reason = True, "stagnation"
            break
        if step_norm <= settings.step_tol * (1.0 + np.linalg.norm(c)):
            converged, reason = True, "step"
            break

    outcome = result(converged, reason)
    if noise_model is not None:
        level = noise_model.expected_misfit(data)
        logger.info(f"📊 Final misfit {outcome.final_misfit:.3e} vs expected noise {level:.3e}")
    logger.info(f"{'✅' if converged else '⚠️'} Gauss-Newton: {outcome.iterations} step(s), "
                f"misfit={outcome.final_misfit:.3e} ({reason})")
    return outcome


# =============================================================================
# ÉTUDES SUR BRUIT
# =============================================================================

@dataclass
class NoiseStudyResult:
    """Erreurs relatives ‖ĉ - c*‖/‖c*‖ sur plusieurs réalisations du bruit."""
    noise_level: float
    relative_errors: np.ndarray
    misfits: np.ndarray
    reg_weight: float

    @property
    def median_error(self) -> float:
        return float(np.median(self.relative_errors))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'realization': np.arange(self.relative_errors.size),
            'relative_error': self.relative_errors,
            'misfit': self.misfits,
        })

    def print_report(self):
        print(f"\n📊 Noise study ({self.relative_errors.size} realizations, level={self.noise_level:.2%})")
        print(f"   median relative error: {self.median_error:.3e}")
        print(f"   max relative error:    {self.relative_errors.max():.3e}")


def noise_study(domain: DiscreteDomain, p: float, c_true: np.ndarray, parameterization: RobinParameterization,
                noise: NoiseModel, n_realizations: int, seed: int, reg_weight: float = 0.0,
                h_init: Optional[RobinField] = None,
                settings: Optional[ReconstructionSettings] = None) -> NoiseStudyResult:
    """Reconstruit h à partir de ``n_realizations`` données bruitées indépendantes."""
    settings = settings or ReconstructionSettings()
    c_true = np.asarray(c_true, dtype=float)
    clean, _ = measure_with_pair(domain, p, parameterization.synthesize(domain, c_true), settings.solver)
    start = h_init or parameterization.synthesize(domain, np.full(parameterization.k, float(np.mean(c_true))))
    # les réalisations tournent en parallèle, le jacobien reste séquentiel
    inner = ReconstructionSettings(**{**settings.__dict__, 'max_workers': 1})

    def realization(child_seed: int):
        noisy = noise.apply(clean, np.random.default_rng(child_seed))
        try:
            outcome = gauss_newton_reconstruct(domain, p, noisy, parameterization, start, reg_weight, noise, inner)
        except NoDescentDirection as exc:
            outcome = exc.best
        error = np.linalg.norm(outcome.c_hat - c_true) / np.linalg.norm(c_true)
        return float(error), outcome.final_misfit

    values = parallel_map(realization, spawn_seeds(seed, n_realizations), settings.max_workers)
    errors, misfits = (np.array(column) for column in zip(*values))
    study = NoiseStudyResult(noise.flux_level, errors, misfits, float(reg_weight))
    logger.info(f"📊 Noise {noise.flux_level:.2%}: median error {study.median_error:.3e}")
    return study


def select_regularization(domain: DiscreteDomain, p: float, data: Measurement,
                          parameterization: RobinParameterization, h_init: RobinField,
                          weights: Sequence[float], noise: NoiseModel, tau: float = 1.1,
                          settings: Optional[ReconstructionSettings] = None) -> Dict[str, object]:
    """
    Principe de discrépance: plus grand poids dont le misfit final reste
    sous tau × niveau de bruit attendu.
    """
    level = noise.expected_misfit(data)
    runs = {}
    for weight in sorted(float(w) for w in weights):
        try:
            runs[weight] = gauss_newton_reconstruct(domain, p, data, parameterization, h_init, weight,
                                                    noise, settings)
        except NoDescentDirection as exc:
            runs[weight] = exc.best
    admissible = [w for w, run in runs.items() if run.final_misfit <= tau * level]
    if admissible:
        chosen = max(admissible)
    else:
        chosen = min(runs)
        logger.warning(f"⚠️ No weight reaches the discrepancy level {tau * level:.3e}; using {chosen:g}")
    return {'weight': chosen, 'noise_level': level, 'results': runs}


def write_reconstruction_report(result: ReconstructionResult, path: Path) -> Path:
    """CSV (iteration, misfit, step_norm, reg_weight) des itérations acceptées."""
    return write_csv(result.to_frame(), path)
