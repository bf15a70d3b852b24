"""
Assemblage éléments finis P1
============================
Évaluations aux points de quadrature et assemblage creux (scipy.sparse) des
vecteurs et matrices utilisés par le solveur propre et la linéarisation.
"""

from typing import Optional

import numpy as np
import scipy.sparse as sp

from core.domain import DiscreteDomain


def element_gradients(domain: DiscreteDomain, u: np.ndarray) -> np.ndarray:
    """Gradient (constant) de u sur chaque élément, (M, g)."""
    return np.einsum('mag,ma->mg', domain.element_grads, u[domain.elements])


def gradient_norms(grads: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(grads * grads, axis=-1))


def quadrature_values(domain: DiscreteDomain, u: np.ndarray) -> np.ndarray:
    """Valeurs de u aux points de quadrature volumiques, (M, Q)."""
    return u[domain.elements] @ domain.quad_rule.bary.T


def face_values(domain: DiscreteDomain, u: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Valeurs de u aux points de quadrature des faces sélectionnées, (F, Qb)."""
    return u[domain.face_nodes[faces]] @ domain.face_rule.bary.T


def scatter_vector(n: int, index: np.ndarray, local: np.ndarray) -> np.ndarray:
    return np.bincount(index.ravel(), weights=local.ravel(), minlength=n)


def scatter_matrix(n: int, index: np.ndarray, local: np.ndarray) -> sp.csr_matrix:
    """Assemble des matrices locales (E, n_loc, n_loc) en une matrice creuse n × n."""
    n_loc = index.shape[1]
    rows = np.repeat(index, n_loc, axis=1)
    cols = np.tile(index, (1, n_loc))
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()


def lp_integral(domain: DiscreteDomain, u: np.ndarray, p: float,
                elements: Optional[np.ndarray] = None) -> float:
    """∫ |u|^p dx, éventuellement restreint à un sous-ensemble d'éléments."""
    values = np.abs(quadrature_values(domain, u)) ** p
    weights = domain.quad_weights
    if elements is not None:
        values, weights = values[elements], weights[elements]
    return float(np.sum(weights * values))


def lp_norm(domain: DiscreteDomain, u: np.ndarray, p: float) -> float:
    return lp_integral(domain, u, p) ** (1.0 / p)


def p_flux_jacobian(grads: np.ndarray, p: float, magnitude: np.ndarray) -> np.ndarray:
    """
    Matrice s^{p-2} I + (p-2) s^{p-4} ξ⊗ξ pour chaque ξ de ``grads`` (…, g).

    Avec s = |ξ| c'est la différentielle DF(ξ) de F(ξ) = |ξ|^{p-2}ξ; en s = 0
    elle vaut I si p = 2 et 0 si p > 2. Avec s > |ξ| on obtient la version
    régularisée.
    """
    dim = grads.shape[-1]
    positive = magnitude > 0
    safe = np.where(positive, magnitude, 1.0)
    at_zero = 1.0 if p == 2 else 0.0
    scalar = np.where(positive, safe ** (p - 2), at_zero)
    direction = grads / safe[..., None]
    outer = direction[..., :, None] * direction[..., None, :]
    rank_one = np.where(positive, (p - 2) * scalar, 0.0)
    return scalar[..., None, None] * np.eye(dim) + rank_one[..., None, None] * outer


def stiffness_matrix(domain: DiscreteDomain, coefficients: np.ndarray,
                     element_scale: Optional[np.ndarray] = None) -> sp.csr_matrix:
    """K_ij = Σ_e c_e W_e ∇φ_i · A_e ∇φ_j avec A_e (M, g, g)."""
    weights = domain.element_volumes if element_scale is None else domain.element_volumes * element_scale
    grads = domain.element_grads
    local = weights[:, None, None] * np.einsum('mag,mgh,mbh->mab', grads, coefficients, grads)
    return scatter_matrix(domain.n_nodes, domain.elements, local)


def weighted_mass_matrix(domain: DiscreteDomain, density: np.ndarray) -> sp.csr_matrix:
    """M_ij = ∫ d φ_i φ_j avec d donnée aux points de quadrature (M, Q)."""
    bary = domain.quad_rule.bary
    local = np.einsum('mq,qa,qb->mab', domain.quad_weights * density, bary, bary)
    return scatter_matrix(domain.n_nodes, domain.elements, local)


def weighted_load(domain: DiscreteDomain, density: np.ndarray) -> np.ndarray:
    """b_i = ∫ d φ_i avec d aux points de quadrature (M, Q)."""
    local = (domain.quad_weights * density) @ domain.quad_rule.bary
    return scatter_vector(domain.n_nodes, domain.elements, local)


def boundary_mass_matrix(domain: DiscreteDomain, faces: np.ndarray, density: np.ndarray) -> sp.csr_matrix:
    """∫_faces d φ_i φ_j dσ avec d aux points de quadrature de face (F, Qb)."""
    bary = domain.face_rule.bary
    local = np.einsum('fq,qa,qb->fab', domain.face_quad_weights[faces] * density, bary, bary)
    return scatter_matrix(domain.n_nodes, domain.face_nodes[faces], local)


def boundary_load(domain: DiscreteDomain, faces: np.ndarray, density: np.ndarray) -> np.ndarray:
    """∫_faces d φ_i dσ."""
    local = (domain.face_quad_weights[faces] * density) @ domain.face_rule.bary
    return scatter_vector(domain.n_nodes, domain.face_nodes[faces], local)


def lumped_boundary_measure(domain: DiscreteDomain, faces: np.ndarray) -> np.ndarray:
    """m_i = ∫_faces φ_i dσ (mesure de bord associée à chaque nœud)."""
    return boundary_load(domain, faces, np.ones((faces.size, domain.face_rule.n_points)))


def restrict(matrix: sp.spmatrix, index: np.ndarray) -> sp.csr_matrix:
    """Sous-matrice carrée sur les degrés de liberté ``index``."""
    return matrix.tocsr()[index][:, index]
