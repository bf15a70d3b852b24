"""
Paramétrisation de h
====================
h(s) = Σ_j c_j φ_j(s), s coordonnée curviligne normalisée sur γ, avec
φ_j constantes par morceaux (k morceaux égaux) ou B-splines ouvertes. Le
champ synthétisé est constant par face de γ (valeur au milieu de la face).
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.interpolate import BSpline

from core.domain import BoundaryLabel, DiscreteDomain, gamma_coordinates, integrate_boundary
from core.eigensolver import RobinField, RobinRepresentation
from core.errors import InvalidParameter


class BasisKind(Enum):
    PIECEWISE_CONSTANT = "piecewise_constant"
    BSPLINE = "bspline"


@dataclass
class RobinParameterization:
    """Base de dimension k sur γ et borne inférieure h_min des coefficients."""
    kind: BasisKind = BasisKind.PIECEWISE_CONSTANT
    k: int = 1
    degree: int = 3
    h_min: float = 1e-3

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = BasisKind(self.kind.lower())
        if self.k < 1:
            raise InvalidParameter(f"Parameterization needs k ≥ 1 (got {self.k})")
        if self.h_min < 0:
            raise InvalidParameter("h_min must be nonnegative")
        if self.kind == BasisKind.BSPLINE and self.k < self.degree + 1:
            raise InvalidParameter(f"B-spline basis of degree {self.degree} needs k ≥ {self.degree + 1}")

    @classmethod
    def from_config(cls, config: dict) -> "RobinParameterization":
        section = config.get('inverse', {})
        return cls(
            kind=BasisKind(section.get('basis', 'piecewise_constant')),
            k=int(section.get('k', 1)),
            degree=int(section.get('degree', 3)),
            h_min=float(section.get('h_min', 1e-3)),
        )

    def design_matrix(self, domain: DiscreteDomain) -> np.ndarray:
        """Valeurs des fonctions de base au milieu de chaque face de γ, (F, k)."""
        s = gamma_coordinates(domain)
        if s.size == 0:
            raise InvalidParameter("The domain has no γ-face to parameterize")
        if self.kind == BasisKind.PIECEWISE_CONSTANT:
            piece = np.minimum(np.floor(s * self.k).astype(int), self.k - 1)
            matrix = np.zeros((s.size, self.k))
            matrix[np.arange(s.size), piece] = 1.0
        else:
            inner = np.linspace(0.0, 1.0, self.k - self.degree + 1)
            knots = np.concatenate([np.zeros(self.degree), inner, np.ones(self.degree)])
            matrix = BSpline.design_matrix(np.clip(s, 0.0, 1.0), knots, self.degree).toarray()
        empty = np.flatnonzero(np.abs(matrix).sum(axis=0) == 0)
        if empty.size:
            raise InvalidParameter(f"Basis functions {empty.tolist()} do not touch any γ-face (mesh too coarse)")
        return matrix

    def synthesize(self, domain: DiscreteDomain, coefficients: np.ndarray) -> RobinField:
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (self.k,):
            raise InvalidParameter(f"Expected {self.k} coefficients, got {coefficients.shape}")
        return RobinField(self.design_matrix(domain) @ coefficients, RobinRepresentation.PIECEWISE_CONSTANT)

    def basis_direction(self, domain: DiscreteDomain, index: int) -> RobinField:
        return RobinField.direction(self.design_matrix(domain)[:, index])

    def project(self, coefficients: np.ndarray) -> np.ndarray:
        """Projection sur {c ≥ h_min} (h ≥ h_min par positivité de la base)."""
        return np.maximum(np.asarray(coefficients, dtype=float), self.h_min)

    def coefficients_from(self, domain: DiscreteDomain, h: RobinField) -> np.ndarray:
        """Coefficients approchant h au sens des moindres carrés (exacts si h est dans l'espace)."""
        values = h.face_means(domain)
        matrix = self.design_matrix(domain)
        if self.kind == BasisKind.PIECEWISE_CONSTANT:
            piece = matrix.argmax(axis=1)
            coefficients = np.empty(self.k)
            for j in range(self.k):
                chunk = values[piece == j]
                coefficients[j] = chunk[0] if np.ptp(chunk) == 0 else chunk.mean()
            return coefficients
        return np.linalg.lstsq(matrix, values, rcond=None)[0]


def gamma_l2_norm(domain: DiscreteDomain, face_values: np.ndarray) -> float:
    """‖ξ‖_{L²(γ)} pour ξ constant par face."""
    return float(np.sqrt(integrate_boundary(domain, BoundaryLabel.ROBIN, np.asarray(face_values) ** 2)))


def gamma_c1_norm(domain: DiscreteDomain, face_values: np.ndarray) -> float:
    """
    Norme C¹ discrète le long de γ: max|ξ| + max|Δξ|/Δs, Δs distance
    curviligne entre milieux de faces consécutives.
    """
    face_values = np.asarray(face_values, dtype=float)
    s = gamma_coordinates(domain)
    order = np.argsort(s)
    total = domain.boundary_measure(BoundaryLabel.ROBIN)
    sup = float(np.max(np.abs(face_values))) if face_values.size else 0.0
    if face_values.size < 2 or domain.geometric_dim == 1:
        return sup
    gaps = np.diff(s[order]) * total
    slopes = np.abs(np.diff(face_values[order])) / np.where(gaps > 0, gaps, np.inf)
    return sup + float(slopes.max())


def default_initial_guess(domain: DiscreteDomain, parameterization: RobinParameterization,
                          value: Optional[float] = None) -> RobinField:
    """Champ constant (1 par défaut) dans l'espace de la paramétrisation."""
    level = 1.0 if value is None else float(value)
    return parameterization.synthesize(domain, np.full(parameterization.k, max(level, parameterization.h_min)))
