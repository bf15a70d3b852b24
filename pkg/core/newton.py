"""
Newton amorti
=============
Minimisation d'une fonctionnelle strictement convexe par Newton avec
recherche linéaire d'Armijo (rebroussement). Utilisé pour le sous-problème
de l'itération de puissance inverse.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import spsolve


@dataclass
class NewtonResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    decrement: float


def damped_newton(objective: Callable[[np.ndarray], float],
                  gradient: Callable[[np.ndarray], np.ndarray],
                  hessian: Callable[[np.ndarray], sp.spmatrix],
                  x0: np.ndarray,
                  max_iter: int = 60,
                  tol: float = 1e-13,
                  backtrack: float = 0.5,
                  c_armijo: float = 1e-4,
                  alpha_min: float = 1e-12) -> NewtonResult:
    """
    Newton amorti.

    Arrêt quand le décrément de Newton λ² = gᵀH⁻¹g passe sous
    tol²·max(1, |J|), ou quand le pas d'Armijo devient inférieur à alpha_min.
    """
    x = np.array(x0, dtype=float)
    value = objective(x)
    decrement = np.inf
    for iteration in range(1, max_iter + 1):
        g = gradient(x)
        direction = -spsolve(sp.csc_matrix(hessian(x)), g)
        decrement = float(-g @ direction)
        if not np.isfinite(decrement) or decrement < 0:
            logger.debug("Newton: Hessian step is not a descent direction, falling back to gradient")
            direction = -g
            decrement = float(g @ g)
        if decrement <= tol ** 2 * max(1.0, abs(value)):
            return NewtonResult(x, value, iteration - 1, True, decrement)

        if decrement < 1e-10 * (1.0 + abs(value)):
            # voisinage quadratique: pas plein
            x = x + direction
            value = objective(x)
            continue

        alpha = 1.0
        while True:
            trial = x + alpha * direction
            trial_value = objective(trial)
            if np.isfinite(trial_value) and trial_value <= value - c_armijo * alpha * decrement:
                break
            alpha *= backtrack
            if alpha < alpha_min:
                logger.debug(f"Newton: line search stalled (decrement={decrement:.3e})")
                converged = decrement <= 1e-20 * max(1.0, abs(value))
                return NewtonResult(x, value, iteration, converged, decrement)
        x, value = trial, trial_value

    return NewtonResult(x, value, max_iter, False, decrement)
