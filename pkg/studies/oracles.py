"""
Oracles analytiques
===================
Valeurs de référence en 1D pour valider les solveurs:

- Robin p = 2 sur (0, L): k cos(kL) + h sin(kL) = 0, λ = k²;
- Dirichlet p-Laplacien: λ = (p-1)(π_p/L)^p, π_p = 2π/(p sin(π/p));
- tir (shooting) sur le système du premier ordre pour p quelconque;
- problème à deux phases p = 2 (substrat + revêtement de conductivité ε).
"""

from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from core.errors import InvalidParameter, NoConvergence


def robin_wavenumber(h: float, length: float = 1.0) -> float:
    """Plus petite racine k ∈ [π/2L, π/L] de k cos(kL) + h sin(kL) = 0."""
    if h < 0:
        raise InvalidParameter("h must be nonnegative")
    if h == 0:
        return np.pi / (2 * length)
    if np.isinf(h):
        return np.pi / length
    return brentq(lambda k: k * np.cos(k * length) + h * np.sin(k * length),
                  np.pi / (2 * length), np.pi / length, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def robin_eigenvalue(h: float, length: float = 1.0) -> float:
    return robin_wavenumber(h, length) ** 2


def _sine_norm(k: float, length: float) -> float:
    return np.sqrt(0.5 * length - np.sin(2 * k * length) / (4 * k))


def robin_sine_flux(h: float, length: float = 1.0) -> float:
    """Flux ∂_ν u en x = 0 (ν = -1) de u = sin(kx)/‖sin(k·)‖₂."""
    k = robin_wavenumber(h, length)
    return -k / _sine_norm(k, length)


def robin_sine_trace_power(h: float, length: float = 1.0) -> float:
    """|u(L)|² pour la fonction propre normalisée dans L²."""
    k = robin_wavenumber(h, length)
    return float((np.sin(k * length) / _sine_norm(k, length)) ** 2)


def pi_p(p: float) -> float:
    return 2 * np.pi / (p * np.sin(np.pi / p))


def dirichlet_plaplace_eigenvalue(p: float, length: float = 1.0) -> float:
    """Premier λ du p-Laplacien 1D avec Dirichlet aux deux bouts."""
    if p <= 1:
        raise InvalidParameter("p must lie in (1, ∞)")
    return (p - 1) * (pi_p(p) / length) ** p


def _terminal_residual(lam: float, p: float, h: Optional[float], length: float) -> float:
    def rhs(_, state):
        u, w = state
        return [np.sign(w) * np.abs(w) ** (1 / (p - 1)), -lam * np.sign(u) * np.abs(u) ** (p - 1)]

    solution = solve_ivp(rhs, (0.0, length), [0.0, 1.0], method="DOP853", rtol=1e-12, atol=1e-13)
    if not solution.success:
        raise NoConvergence(f"Shooting integration failed at λ={lam:g}: {solution.message}")
    u_end, w_end = solution.y[:, -1]
    if h is None:
        return float(u_end)
    return float(w_end + h * np.sign(u_end) * np.abs(u_end) ** (p - 1))


def shoot_plaplace_eigenvalue(p: float, h: Optional[float] = None, length: float = 1.0,
                              lam_min: float = 1e-3, lam_max: float = 1e6) -> float:
    """
    Premier λ par tir: u(0) = 0, |u'|^{p-2}u'(0) = 1, condition terminale
    u(L) = 0 (h=None) ou |u'|^{p-2}u'(L) + h|u|^{p-2}u(L) = 0.
    """
    if p <= 1:
        raise InvalidParameter("p must lie in (1, ∞)")
    lower = lam_min
    value = _terminal_residual(lower, p, h, length)
    upper = lower
    while value > 0:
        lower, upper = upper, upper * 1.25
        if upper > lam_max:
            raise NoConvergence(f"No sign change of the shooting residual below λ={lam_max:g}")
        value = _terminal_residual(upper, p, h, length)
    if upper == lam_min:
        raise InvalidParameter("lam_min is already above the first eigenvalue")
    return brentq(lambda lam: _terminal_residual(lam, p, h, length), lower, upper, xtol=1e-13, rtol=1e-13)


def two_phase_interval_eigenvalue(epsilon: float, rho: float = 1.0, length: float = 1.0) -> float:
    """
    p = 2: Dirichlet en 0, substrat (0, L) de conductivité 1, revêtement
    (L, L + ερ) de conductivité ε, Dirichlet en L + ερ. Plus petite racine de

        k cos(kL) sin(κt) + ε κ sin(kL) cos(κt) = 0,  k = √Λ, κ = √(Λ/ε), t = ερ.
    """
    if epsilon <= 0 or rho <= 0:
        raise InvalidParameter("epsilon and rho must be > 0")
    thickness = epsilon * rho

    def determinant(lam):
        k, kappa = np.sqrt(lam), np.sqrt(lam / epsilon)
        return (k * np.cos(k * length) * np.sin(kappa * thickness)
                + epsilon * kappa * np.sin(k * length) * np.cos(kappa * thickness))

    grid = np.linspace(1e-9, (np.pi / length) ** 2, 2001)
    values = determinant(grid)
    change = np.flatnonzero(np.sign(values[:-1]) != np.sign(values[1:]))
    if change.size == 0:
        raise NoConvergence("No root of the two-phase determinant below the Dirichlet eigenvalue")
    i = change[0]
    return brentq(determinant, grid[i], grid[i + 1], xtol=1e-14, rtol=1e-14)
