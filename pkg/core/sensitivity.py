"""
Sensibilité au coefficient de Robin
===================================
Pour p ≥ 2:

- matrice de linéarisation A = DF(∇u), F(ξ) = |ξ|^{p-2}ξ, et sa version
  régularisée A_δ (coupure lisse près de ∇u = 0);
- matrice moyenne Ā le long du segment [∇u₂, ∇u₁] et bornes d'ellipticité;
- dérivée λ' = ∫_γ ξ|u|^p;
- système linéarisé augmenté (u', λ') et flux de u' sur Γ_D.

Pour 1 < p < 2 la linéarisation n'est pas couverte (UnsupportedExponent).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from core.assembly import (
    boundary_load, boundary_mass_matrix, element_gradients, face_values, gradient_norms,
    p_flux_jacobian, quadrature_values, stiffness_matrix, weighted_load, weighted_mass_matrix,
)
from core.domain import BoundaryLabel, DiscreteDomain
from core.eigensolver import (
    EigenSolveSettings, Eigenpair, FluxTrace, PLaplaceEigenSolver, RobinField,
    check_exponent, consistent_flux_trace,
)
from core.errors import InvalidParameter, LinearizationNotInvertible, UnsupportedExponent
from utils.statistics import loglog_fit

PATH_SAMPLES = 32


def _require_p_at_least_two(p: float) -> float:
    p = check_exponent(p)
    if p < 2:
        raise UnsupportedExponent(f"Linearization requires p ≥ 2 (got p={p:g})")
    return p


# =============================================================================
# FORMULES PONCTUELLES
# =============================================================================

def vector_p_map(xi: np.ndarray, p: float) -> np.ndarray:
    """F(ξ) = |ξ|^{p-2}ξ (F(0) = 0)."""
    xi = np.asarray(xi, dtype=float)
    norm = gradient_norms(xi)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, safe ** (p - 2), 0.0)[..., None] * xi


def monotonicity_lower_bound(a: np.ndarray, b: np.ndarray, p: float) -> float:
    """
    Minorant de ⟨F(b) - F(a), b - a⟩:
    2^{2-p}|b-a|^p pour p ≥ 2, (p-1)|b-a|²(|a|+|b|)^{p-2} pour 1 < p < 2.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    gap = float(np.linalg.norm(b - a))
    if p >= 2:
        return 2.0 ** (2 - p) * gap ** p
    total = float(np.linalg.norm(a) + np.linalg.norm(b))
    return (p - 1) * gap ** 2 * total ** (p - 2) if total > 0 else 0.0


def smooth_cutoff(t: np.ndarray, delta: float) -> np.ndarray:
    """
    Coupure χ_δ: 1 sur [0, δ], 0 sur [2δ, ∞), raccord polynomial C² entre
    les deux (|χ'| ≤ 2/δ).
    """
    tau = np.clip((np.asarray(t, dtype=float) - delta) / delta, 0.0, 1.0)
    return 1.0 - tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau ** 2)


def linearized_matrix(grad_u: np.ndarray, p: float) -> np.ndarray:
    """A = DF(∇u) pour un ou plusieurs gradients (…, d)."""
    _require_p_at_least_two(p)
    grad_u = np.asarray(grad_u, dtype=float)
    return p_flux_jacobian(grad_u, p, gradient_norms(grad_u))


def regularized_magnitude(norms: np.ndarray, delta: float,
                          cutoff: Callable[[np.ndarray, float], np.ndarray] = smooth_cutoff) -> np.ndarray:
    """s = sqrt(|ξ|² + δ²χ_δ(|ξ|)), exactement |ξ| là où χ_δ = 0."""
    chi = cutoff(norms, delta)
    return np.where(chi > 0, np.sqrt(norms ** 2 + delta ** 2 * chi), norms)


def regularized_matrix(grad_u: np.ndarray, p: float, delta: float,
                       cutoff: Callable[[np.ndarray, float], np.ndarray] = smooth_cutoff) -> np.ndarray:
    """A_δ: égale à DF(∇u) dès que |∇u| ≥ 2δ, uniformément elliptique sinon."""
    _require_p_at_least_two(p)
    if not delta > 0:
        raise InvalidParameter(f"delta must be > 0 (got {delta})")
    grad_u = np.asarray(grad_u, dtype=float)
    return p_flux_jacobian(grad_u, p, regularized_magnitude(gradient_norms(grad_u), delta, cutoff))


def ellipticity_window(p: float, delta: float, grad_max: float) -> Tuple[float, float]:
    """Bornes (θ_δ, Θ_δ) des valeurs propres de A_δ quand |∇u| ≤ grad_max."""
    lo, hi = delta ** (p - 2), (grad_max + delta) ** (p - 2)
    if p < 2:
        lo, hi = hi, lo
    return min(1.0, p - 1) * lo, max(1.0, p - 1) * hi


# =============================================================================
# CHAMPS DE COEFFICIENTS
# =============================================================================

class CoefficientKind(Enum):
    RAW_A = "raw"
    REGULARIZED_A_DELTA = "regularized"
    PATH_ABAR = "path"


@dataclass(eq=False)
class CoefficientField:
    """Matrice symétrique d × d par élément."""
    matrices: np.ndarray
    kind: CoefficientKind
    delta: Optional[float] = None

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrices)

    def is_symmetric(self, tol: float = 1e-14) -> bool:
        gap = np.abs(self.matrices - np.swapaxes(self.matrices, -1, -2))
        return bool(np.all(gap <= tol * np.maximum(1.0, np.abs(self.matrices))))


def coefficient_field(domain: DiscreteDomain, u: np.ndarray, p: float,
                      kind: CoefficientKind = CoefficientKind.REGULARIZED_A_DELTA,
                      delta: Optional[float] = None,
                      cutoff: Callable[[np.ndarray, float], np.ndarray] = smooth_cutoff) -> CoefficientField:
    grads = element_gradients(domain, u)
    if kind == CoefficientKind.RAW_A:
        return CoefficientField(linearized_matrix(grads, p), kind)
    if kind == CoefficientKind.REGULARIZED_A_DELTA:
        if delta is None:
            delta = default_delta(grads)
        return CoefficientField(regularized_matrix(grads, p, delta, cutoff), kind, delta)
    raise InvalidParameter("Path coefficients need two eigenfunctions (see path_matrix_report)")


def default_delta(grads: np.ndarray) -> float:
    grad_max = float(gradient_norms(grads).max())
    if grad_max == 0:
        raise InvalidParameter("Cannot pick a regularization scale for a constant function")
    return 1e-3 * grad_max


@dataclass
class PathEllipticityReport:
    """Bornes de Ā = ∫₀¹ DF(t∇u₁ + (1-t)∇u₂) dt, élément par élément."""
    theta_min: float
    theta_max: float
    lower_bound_integral: float
    min_gradient_sum: float
    coefficients: CoefficientField = field(repr=False)

    def to_dict(self) -> dict:
        return {
            'theta_min': self.theta_min,
            'theta_max': self.theta_max,
            'lower_bound_integral': self.lower_bound_integral,
            'min_gradient_sum': self.min_gradient_sum,
        }


def path_matrix_report(u1: Eigenpair, u2: Eigenpair, p: float,
                       n_samples: int = PATH_SAMPLES) -> PathEllipticityReport:
    """
    Ā par quadrature du point milieu (n_samples points) et bornes de ses
    valeurs propres. ``lower_bound_integral`` minore ∫₀¹|t∇u₁ + (1-t)∇u₂|^{p-2} dt.
    """
    p = _require_p_at_least_two(p)
    if not u1.domain.same_as(u2.domain):
        raise InvalidParameter("path_matrix_report needs two eigenfunctions on the same domain")
    g1 = element_gradients(u1.domain, u1.u)
    g2 = element_gradients(u2.domain, u2.u)
    accumulated = np.zeros(g1.shape + (g1.shape[-1],))
    scalar = np.zeros(g1.shape[0])
    for t in (np.arange(n_samples) + 0.5) / n_samples:
        grads = t * g1 + (1 - t) * g2
        norms = gradient_norms(grads)
        accumulated += p_flux_jacobian(grads, p, norms)
        scalar += norms ** (p - 2)
    accumulated /= n_samples
    scalar /= n_samples
    coefficients = CoefficientField(accumulated, CoefficientKind.PATH_ABAR)
    eigenvalues = coefficients.eigenvalues
    return PathEllipticityReport(
        theta_min=float(eigenvalues.min()),
        theta_max=float(eigenvalues.max()),
        lower_bound_integral=float(scalar.min()),
        min_gradient_sum=float((gradient_norms(g1) + gradient_norms(g2)).min()),
        coefficients=coefficients,
    )


# =============================================================================
# DÉRIVÉE ET LINÉARISATION
# =============================================================================

def lambda_derivative(base: Eigenpair, xi: RobinField, domain: DiscreteDomain) -> float:
    """λ'(h)[ξ] = ∫_γ ξ|u|^p dσ."""
    if not base.domain.same_as(domain):
        raise InvalidParameter("Eigenpair was computed on another domain")
    faces = domain.partition.robin_faces
    if faces.size == 0:
        return 0.0
    trace = face_values(domain, base.u, faces)
    density = xi.face_quadrature_values(domain) * np.abs(trace) ** base.p
    return float(np.sum(domain.face_quad_weights[faces] * density))


@dataclass(eq=False)
class LinearizedSolution:
    """Solution (u', λ') du système linéarisé et diagnostics."""
    u_prime: np.ndarray
    lambda_prime: float
    constraint_residual: float
    condition_estimate: float
    delta: float
    dirichlet_flux: Optional[FluxTrace] = None

    def to_dict(self) -> dict:
        return {
            'lambda_prime': self.lambda_prime,
            'constraint_residual': self.constraint_residual,
            'condition_estimate': self.condition_estimate,
            'delta': self.delta,
        }


def solve_linearized(domain: DiscreteDomain, p: float, h: RobinField, base: Eigenpair, xi: RobinField,
                     delta_reg: Optional[float] = None,
                     cutoff: Callable[[np.ndarray, float], np.ndarray] = smooth_cutoff) -> LinearizedSolution:
    """
    Résout

        L u' - λ' b = -r_ξ,    bᵀu' = 0

    avec L = K_{A_δ} + (p-1)R_h|u|^{p-2} - λ(p-1)M_{|u|^{p-2}},
    b_i = ∫|u|^{p-2}u φ_i et r_ξ,i = ∫_γ ξ|u|^{p-2}u φ_i.
    """
    p = _require_p_at_least_two(p)
    if not base.domain.same_as(domain):
        raise InvalidParameter("Eigenpair was computed on another domain")
    if base.p != p:
        raise InvalidParameter(f"Eigenpair exponent {base.p} differs from p={p}")
    h.validate_for(domain)
    xi.validate_for(domain)

    u, eigenvalue = base.u, base.eigenvalue
    grads = element_gradients(domain, u)
    delta = default_delta(grads) if delta_reg is None else float(delta_reg)
    if not delta > 0:
        raise InvalidParameter(f"delta_reg must be > 0 (got {delta})")

    sigma = base.sigma
    stiffness = stiffness_matrix(domain, regularized_matrix(grads, p, delta, cutoff), sigma)
    values = quadrature_values(domain, u)
    weight = np.abs(values) ** (p - 2)
    mass = weighted_mass_matrix(domain, (p - 1) * weight)
    load = weighted_load(domain, weight * values)

    robin = domain.partition.robin_faces
    if robin.size:
        trace = face_values(domain, u, robin)
        trace_weight = np.abs(trace) ** (p - 2)
        robin_matrix = boundary_mass_matrix(domain, robin, (p - 1) * h.face_quadrature_values(domain) * trace_weight)
        source = boundary_load(domain, robin, xi.face_quadrature_values(domain) * trace_weight * trace)
    else:
        robin_matrix = sp.csr_matrix((domain.n_nodes, domain.n_nodes))
        source = np.zeros(domain.n_nodes)

    operator = stiffness + robin_matrix - eigenvalue * mass
    free = domain.free_nodes
    reduced = operator.tocsr()[free][:, free]
    column = load[free][:, None]
    augmented = sp.bmat([[reduced, sp.csr_matrix(-column)],
                         [sp.csr_matrix(-column.T), None]], format='csc')
    rhs = np.concatenate([-source[free], [0.0]])
    try:
        factor = splu(augmented)
    except RuntimeError as exc:
        raise LinearizationNotInvertible(f"Augmented linearized system is singular ({exc})")
    solution = factor.solve(rhs)
    if not np.all(np.isfinite(solution)):
        raise LinearizationNotInvertible("Augmented linearized system produced non-finite values")

    inverse = LinearOperator(augmented.shape, matvec=factor.solve,
                             rmatvec=lambda x: factor.solve(x, trans='T'), dtype=float)
    condition = float(onenormest(augmented) * onenormest(inverse))

    u_prime = np.zeros(domain.n_nodes)
    u_prime[free] = solution[:-1]
    lambda_prime = float(solution[-1])
    constraint = abs(float(load @ u_prime))

    flux = None
    dirichlet = domain.partition.dirichlet_faces
    if dirichlet.size:
        residual = (stiffness - eigenvalue * mass) @ u_prime - lambda_prime * load
        flux = consistent_flux_trace(domain, residual, dirichlet, BoundaryLabel.DIRICHLET)

    logger.debug(f"Linearized solve: λ'={lambda_prime:.10g} cond≈{condition:.2e} δ={delta:.2e}")
    return LinearizedSolution(
        u_prime=u_prime, lambda_prime=lambda_prime, constraint_residual=constraint,
        condition_estimate=condition, delta=delta, dirichlet_flux=flux,
    )


# =============================================================================
# VÉRIFICATION PAR DIFFÉRENCES FINIES
# =============================================================================

@dataclass
class DerivativeCheck:
    """Reste λ(h+tξ) - λ(h) - tλ' en fonction de t."""
    t_values: np.ndarray
    lambda_values: np.ndarray
    remainders: np.ndarray
    lambda_prime: float
    remainder_order: Optional[float] = None
    rows: List[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            'lambda_prime': self.lambda_prime,
            'remainder_order': self.remainder_order,
            't_values': self.t_values.tolist(),
            'remainders': self.remainders.tolist(),
        }


def derivative_remainder_probe(domain: DiscreteDomain, p: float, h: RobinField, xi: RobinField,
                               t_values: Sequence[float],
                               settings: Optional[EigenSolveSettings] = None) -> DerivativeCheck:
    """
    Compare λ' = ∫_γ ξ|u|^p aux différences finies λ(h+tξ) - λ(h) pour
    plusieurs t et estime l'ordre du reste (≈ 2 attendu).
    """

    p = check_exponent(p)
    solver = PLaplaceEigenSolver(settings)
    base = solver.solve(domain, p, h)
    lambda_prime = lambda_derivative(base, xi, domain)
    t_values = np.asarray(t_values, dtype=float)
    if np.any(t_values <= 0):
        raise InvalidParameter("t values must be > 0")
    lambdas = np.array([solver.solve(domain, p, h.perturbed(xi, t), initial=base.u).eigenvalue
                        for t in t_values])
    remainders = np.abs(lambdas - base.eigenvalue - t_values * lambda_prime)
    order = None
    usable = remainders > 0
    if usable.sum() >= 2:
        order = loglog_fit(t_values[usable], remainders[usable]).slope
    rows = [{'t': t, 'lambda_t': lam, 'finite_difference': (lam - base.eigenvalue) / t,
             'lambda_prime': lambda_prime, 'remainder': r}
            for t, lam, r in zip(t_values, lambdas, remainders)]
    logger.info(f"📊 Derivative check: λ'={lambda_prime:.10g}, remainder order={order}")
    return DerivativeCheck(t_values, lambdas, remainders, lambda_prime, order, rows)
