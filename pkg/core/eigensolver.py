"""
Solveur propre p-Laplacien
==========================
Premier couple propre (λ₁, u) du p-Laplacien avec conditions mixtes
Dirichlet (Γ_D) / Robin (γ):

    -div(σ|∇u|^{p-2}∇u) = λ|u|^{p-2}u   dans Ω
    u = 0                                sur Γ_D
    σ|∇u|^{p-2}∂_ν u + h|u|^{p-2}u = 0   sur γ

par itération de puissance inverse non linéaire. Chaque itération résout
le sous-problème convexe min (1/p)E(v) - λ_k ∫|u_k|^{p-2}u_k v par Newton
amorti, puis renormalise dans L^p.

Fournit aussi le flux normal consistant sur une partie du bord et le
problème à deux phases (substrat + revêtement mince de conductivité ε^{p-1}).
"""

import sys
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

ROOT_DIR = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT_DIR))

from core.assembly import (
    boundary_load, boundary_mass_matrix, element_gradients, face_values, gradient_norms,
    lp_integral, lp_norm, lumped_boundary_measure, p_flux_jacobian, quadrature_values,
    restrict, scatter_vector, stiffness_matrix, weighted_load,
)
from core.domain import (
    BoundaryLabel, CoatedDomain, DiscreteDomain, LabelLike, RegionTag, parse_label,
)
from core.errors import (
    ConstraintViolation, DegenerateInput, InvalidParameter, NoConvergence, UnsupportedProblem,
)
from core.newton import damped_newton


def check_exponent(p: float) -> float:
    if not np.isfinite(p) or p <= 1.0:
        raise InvalidParameter("p must lie in (1, ∞)")
    return float(p)


# =============================================================================
# COEFFICIENT DE ROBIN
# =============================================================================

class RobinRepresentation(Enum):
    """Représentation discrète de h sur γ."""
    PIECEWISE_CONSTANT = "piecewise_constant"   # une valeur par face de γ
    NODAL = "nodal"                             # une valeur par nœud de γ (trié)


@dataclass(frozen=True, eq=False)
class RobinField:
    """
    Coefficient de Robin h ≥ 0 sur γ.

    Avec ``signed=True`` l'objet représente une direction de perturbation ξ
    (valeurs de signe quelconque).
    """
    values: np.ndarray
    representation: RobinRepresentation = RobinRepresentation.PIECEWISE_CONSTANT
    signed: bool = False

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise InvalidParameter("Robin coefficient values must be finite")
        if not self.signed and np.any(values < 0):
            raise InvalidParameter("h must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @staticmethod
    def expected_size(domain: DiscreteDomain, representation: RobinRepresentation) -> int:
        if representation == RobinRepresentation.NODAL:
            return domain.robin_nodes.size
        return domain.partition.robin_faces.size

    @classmethod
    def constant(cls, domain: DiscreteDomain, value: float,
                 representation: RobinRepresentation = RobinRepresentation.PIECEWISE_CONSTANT) -> "RobinField":
        return cls(np.full(cls.expected_size(domain, representation), float(value)), representation)

    @classmethod
    def direction(cls, values,
                  representation: RobinRepresentation = RobinRepresentation.PIECEWISE_CONSTANT) -> "RobinField":
        return cls(values, representation, signed=True)

    def validate_for(self, domain: DiscreteDomain) -> None:
        expected = self.expected_size(domain, self.representation)
        if self.values.size != expected:
            raise InvalidParameter(
                f"Robin field has {self.values.size} values, domain needs {expected} "
                f"({self.representation.value})")

    def face_quadrature_values(self, domain: DiscreteDomain) -> np.ndarray:
        """Valeurs de h aux points de quadrature des faces de γ, (F, Qb)."""
        self.validate_for(domain)
        faces = domain.partition.robin_faces
        n_points = domain.face_rule.n_points
        if self.representation == RobinRepresentation.PIECEWISE_CONSTANT:
            return np.repeat(self.values[:, None], n_points, axis=1)
        position = np.searchsorted(domain.robin_nodes, domain.face_nodes[faces])
        return self.values[position] @ domain.face_rule.bary.T

    def face_means(self, domain: DiscreteDomain) -> np.ndarray:
        """Valeur moyenne de h sur chaque face de γ."""
        return self.face_quadrature_values(domain) @ domain.face_rule.weights

    def perturbed(self, direction: "RobinField", t: float) -> "RobinField":
        """h + t·ξ (même représentation)."""
        if direction.representation != self.representation:
            raise InvalidParameter("Perturbation direction must share the field representation")
        if direction.values.shape != self.values.shape:
            raise InvalidParameter("Perturbation direction has the wrong size")
        return RobinField(self.values + t * direction.values, self.representation, self.signed)

    def scaled(self, factor: float) -> "RobinField":
        return RobinField(factor * self.values, self.representation, self.signed)

    def to_dict(self) -> dict:
        return {
            'representation': self.representation.value,
            'signed': self.signed,
            'values': self.values.tolist(),
        }


# =============================================================================
# FORME VARIATIONNELLE
# =============================================================================

def _signed_power(values: np.ndarray, exponent: float) -> np.ndarray:
    return np.sign(values) * np.abs(values) ** exponent


class PLaplaceForm:
    """
    Énergie E(u) = ∫σ|∇u|^p + ∫_γ h|u|^p et ses dérivées discrètes.

    ``volume_gradient`` et ``robin_gradient`` renvoient (1/p)∇E, c'est à dire
    les vecteurs ∫σ|∇u|^{p-2}∇u·∇φ_i et ∫_γ h|u|^{p-2}u φ_i.
    """

    def __init__(self, domain: DiscreteDomain, p: float, h: RobinField, sigma: Optional[np.ndarray] = None):
        self.domain = domain
        self.p = check_exponent(p)
        self.h = h
        self.sigma = np.ones(domain.n_elements) if sigma is None else np.asarray(sigma, dtype=float)
        if self.sigma.shape != (domain.n_elements,) or np.any(self.sigma <= 0):
            raise InvalidParameter("sigma must be one positive value per element")
        self.robin = domain.partition.robin_faces
        self.h_quad = h.face_quadrature_values(domain)
        self._scale = domain.element_volumes * self.sigma

    def volume_energy(self, u: np.ndarray) -> float:
        norms = gradient_norms(element_gradients(self.domain, u))
        return float(np.sum(self._scale * norms ** self.p))

    def robin_energy(self, u: np.ndarray) -> float:
        if self.robin.size == 0:
            return 0.0
        trace = face_values(self.domain, u, self.robin)
        return float(np.sum(self.domain.face_quad_weights[self.robin] * self.h_quad * np.abs(trace) ** self.p))

    def energy(self, u: np.ndarray) -> float:
        return self.volume_energy(u) + self.robin_energy(u)

    def volume_gradient(self, u: np.ndarray) -> np.ndarray:
        grads = element_gradients(self.domain, u)
        norms = gradient_norms(grads)
        factor = np.where(norms > 0, np.where(norms > 0, norms, 1.0) ** (self.p - 2), 0.0)
        flux = (self._scale * factor)[:, None] * grads
        local = np.einsum('mag,mg->ma', self.domain.element_grads, flux)
        return scatter_vector(self.domain.n_nodes, self.domain.elements, local)

    def robin_gradient(self, u: np.ndarray) -> np.ndarray:
        if self.robin.size == 0:
            return np.zeros(self.domain.n_nodes)
        trace = face_values(self.domain, u, self.robin)
        return boundary_load(self.domain, self.robin, self.h_quad * _signed_power(trace, self.p - 1))

    def load(self, u: np.ndarray) -> np.ndarray:
        """B(u)_i = ∫|u|^{p-2}u φ_i."""
        return weighted_load(self.domain, _signed_power(quadrature_values(self.domain, u), self.p - 1))

    def residual(self, u: np.ndarray, eigenvalue: float) -> np.ndarray:
        return self.volume_gradient(u) + self.robin_gradient(u) - eigenvalue * self.load(u)

    def hessian(self, u: np.ndarray, delta: float):
        """Hessienne régularisée de (1/p)E: |∇u| → sqrt(|∇u|² + δ²)."""
        grads = element_gradients(self.domain, u)
        magnitude = np.sqrt(gradient_norms(grads) ** 2 + delta ** 2)
        matrix = stiffness_matrix(self.domain, p_flux_jacobian(grads, self.p, magnitude), self.sigma)
        if self.robin.size:
            trace = face_values(self.domain, u, self.robin)
            if self.p < 2:
                weight = (trace ** 2 + delta ** 2) ** ((self.p - 2) / 2)
            else:
                weight = np.abs(trace) ** (self.p - 2)
            matrix = matrix + boundary_mass_matrix(self.domain, self.robin, (self.p - 1) * self.h_quad * weight)
        return matrix


# =============================================================================
# RÉSULTATS
# =============================================================================

@dataclass
class EigenSolveSettings:
    """Paramètres de l'itération de puissance inverse."""
    tol_lambda: float = 1e-10
    tol_u: float = 1e-8
    max_outer: int = 500
    max_inner: int = 60
    tol_inner: float = 1e-13
    delta_inner: float = 1e-8
    seed: int = 12345

    def __post_init__(self):
        for name in ('tol_lambda', 'tol_u', 'tol_inner', 'delta_inner'):
            if not getattr(self, name) > 0:
                raise InvalidParameter(f"{name} must be > 0")
        if self.max_outer < 1 or self.max_inner < 1:
            raise InvalidParameter("max_outer and max_inner must be ≥ 1")

    @classmethod
    def from_config(cls, config: dict, seed: Optional[int] = None) -> "EigenSolveSettings":
        section = config.get('solver', {})
        return cls(
            tol_lambda=float(section.get('tol_lambda', 1e-10)),
            tol_u=float(section.get('tol_u', 1e-8)),
            max_outer=int(section.get('max_outer', 500)),
            max_inner=int(section.get('max_inner', 60)),
            tol_inner=float(section.get('tol_inner', 1e-13)),
            delta_inner=float(section.get('delta_inner', 1e-8)),
            seed=int(seed if seed is not None else section.get('seed', 12345)),
        )

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(eq=False)
class Eigenpair:
    """Premier couple propre discret, u normalisé (∫|u|^p = 1, u > 0)."""
    eigenvalue: float
    u: np.ndarray
    p: float
    residual_norm: float
    iterations: int
    domain: DiscreteDomain
    h: RobinField
    sigma: Optional[np.ndarray] = None
    converged: bool = True
    positive: bool = True

    def to_dict(self) -> dict:
        return {
            'eigenvalue': self.eigenvalue,
            'p': self.p,
            'residual_norm': self.residual_norm,
            'iterations': self.iterations,
            'converged': self.converged,
            'positive': self.positive,
            'n_nodes': self.domain.n_nodes,
        }


@dataclass(eq=False)
class FluxTrace:
    """Flux normal consistant |∇u|^{p-2}∂_ν u par nœud et par face d'une partie du bord."""
    label: BoundaryLabel
    node_ids: np.ndarray
    node_values: np.ndarray
    face_ids: np.ndarray
    face_values: np.ndarray
    face_measures: np.ndarray
    hopf_ok: Optional[bool] = None

    @property
    def valid_faces(self) -> np.ndarray:
        """Masque des faces dont le flux est défini (au moins un nœud hors de ζ)."""
        return np.isfinite(self.face_values)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            'face_id': self.face_ids,
            'measure': self.face_measures,
            'flux': self.face_values,
        })


@dataclass(eq=False)
class TwoPhaseResult:
    """Couple propre du problème à deux phases sur Ω_ε."""
    eigenvalue: float
    phi: np.ndarray
    coating_mass: float
    substrate_restriction: np.ndarray
    epsilon: float
    eigenpair: Eigenpair = field(repr=False)

    def to_dict(self) -> dict:
        return {
            'epsilon': self.epsilon,
            'eigenvalue': self.eigenvalue,
            'coating_mass': self.coating_mass,
            'iterations': self.eigenpair.iterations,
        }


# =============================================================================
# SOLVEUR
# =============================================================================

def _check_nodal_vector(domain: DiscreteDomain, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (domain.n_nodes,):
        raise InvalidParameter(f"Nodal vector must have shape ({domain.n_nodes},), got {u.shape}")
    constrained = domain.constrained_nodes
    if constrained.size and np.max(np.abs(u[constrained])) > 1e-12 * max(1.0, np.max(np.abs(u))):
        raise ConstraintViolation("Nodal vector is nonzero on Γ_D")
    return u


def energy(domain: DiscreteDomain, p: float, h: RobinField, u: np.ndarray,
           sigma: Optional[np.ndarray] = None) -> float:
    """E(u) = ∫σ|∇u|^p + ∫_γ h|u|^p."""
    u = _check_nodal_vector(domain, u)
    return PLaplaceForm(domain, p, h, sigma).energy(u)


def rayleigh_quotient(domain: DiscreteDomain, p: float, h: RobinField, u: np.ndarray,
                      sigma: Optional[np.ndarray] = None) -> float:
    u = _check_nodal_vector(domain, u)
    mass = lp_integral(domain, u, p)
    if mass <= 0:
        raise DegenerateInput("Rayleigh quotient of the zero function")
    return PLaplaceForm(domain, p, h, sigma).energy(u) / mass


class PLaplaceEigenSolver:
    """
    Itération de puissance inverse non linéaire.

    Sans état entre deux appels: une même instance peut servir à plusieurs
    threads.
    """

    def __init__(self, settings: Optional[EigenSolveSettings] = None):
        self.settings = settings or EigenSolveSettings()

    def _initial_vector(self, domain: DiscreteDomain, p: float, initial: Optional[np.ndarray]) -> np.ndarray:
        if initial is not None:
            u = np.abs(np.asarray(initial, dtype=float)).copy()
        else:
            u = np.random.default_rng(self.settings.seed).uniform(0.5, 1.5, domain.n_nodes)
        u[domain.constrained_nodes] = 0.0
        norm = lp_norm(domain, u, p)
        if norm == 0:
            raise DegenerateInput("Initial vector vanishes on the free nodes")
        return u / norm

    def solve(self, domain: DiscreteDomain, p: float, h: RobinField,
              sigma: Optional[np.ndarray] = None, initial: Optional[np.ndarray] = None) -> Eigenpair:
        p = check_exponent(p)
        h.validate_for(domain)
        if domain.partition.constrained_faces.size == 0:
            raise UnsupportedProblem("Γ_D is empty: no Dirichlet part to pin the principal eigenvalue")
        settings = self.settings
        form = PLaplaceForm(domain, p, h, sigma)
        free = domain.free_nodes
        n_nodes = domain.n_nodes

        def embed(x):
            v = np.zeros(n_nodes)
            v[free] = x
            return v

        u = self._initial_vector(domain, p, initial)
        eigenvalue = form.energy(u)
        converged = False
        outer = 0
        for outer in range(1, settings.max_outer + 1):
            rhs = (eigenvalue * form.load(u))[free]
            grad_max = float(gradient_norms(element_gradients(domain, u)).max())
            delta = settings.delta_inner * max(grad_max, np.finfo(float).tiny)

            inner = damped_newton(
                objective=lambda x: form.energy(embed(x)) / p - rhs @ x,
                gradient=lambda x: (form.volume_gradient(embed(x)) + form.robin_gradient(embed(x)))[free] - rhs,
                hessian=lambda x: restrict(form.hessian(embed(x), delta), free),
                x0=u[free],
                max_iter=settings.max_inner,
                tol=settings.tol_inner,
            )
            if not inner.converged:
                logger.debug(f"Inner Newton stopped at decrement {inner.decrement:.3e} (outer {outer})")
            v = embed(inner.x)
            norm = lp_norm(domain, v, p)
            if not np.isfinite(norm) or norm == 0:
                raise NoConvergence("Inverse iteration produced a degenerate iterate",
                                    best=self._pair(domain, p, h, sigma, form, u, eigenvalue, outer, False))
            u_next = v / norm
            eigenvalue_next = form.energy(u_next)
            change_u = float(np.max(np.abs(u_next - u)))
            change_lambda = abs(eigenvalue_next - eigenvalue)
            u, eigenvalue = u_next, eigenvalue_next
            logger.trace(f"outer {outer}: λ={eigenvalue:.15g} Δλ={change_lambda:.2e} Δu={change_u:.2e}")
            if change_lambda <= settings.tol_lambda * eigenvalue and change_u <= settings.tol_u:
                converged = True
                break

        pair = self._pair(domain, p, h, sigma, form, u, eigenvalue, outer, converged)
        if not converged:
            logger.warning(f"⚠️ Inverse iteration did not converge in {settings.max_outer} iterations "
                           f"(p={p:g}, λ={eigenvalue:.10g})")
            raise NoConvergence(f"No convergence after {settings.max_outer} outer iterations", best=pair)
        logger.info(f"✅ SOLVE | p={p:g} | λ₁={eigenvalue:.12g} | iters={outer} | "
                    f"residual={pair.residual_norm:.2e}")
        return pair

    def _pair(self, domain, p, h, sigma, form, u, eigenvalue, iterations, converged) -> Eigenpair:
        free = domain.free_nodes
        residual = form.residual(u, eigenvalue)[free]
        scale = max(float(np.max(np.abs(eigenvalue * form.load(u)[free]))), np.finfo(float).tiny)
        positive = bool(np.all(u[free] > 0))
        if converged and not positive:
            logger.warning("⚠️ Principal eigenfunction is not strictly positive on the free nodes")
        return Eigenpair(
            eigenvalue=float(eigenvalue), u=u, p=p, residual_norm=float(np.max(np.abs(residual)) / scale),
            iterations=iterations, domain=domain, h=h, sigma=sigma, converged=converged, positive=positive,
        )


def principal_eigenpair(domain: DiscreteDomain, p: float, h: RobinField,
                        settings: Optional[EigenSolveSettings] = None) -> Eigenpair:
    """Premier couple propre (λ₁, u) du problème mixte Dirichlet-Robin."""
    return PLaplaceEigenSolver(settings).solve(domain, p, h)


# =============================================================================
# FLUX NORMAL
# =============================================================================

def consistent_flux_trace(domain: DiscreteDomain, nodal_residual: np.ndarray, faces: np.ndarray,
                          label: BoundaryLabel) -> FluxTrace:
    """
    Flux nodal R_i / m_i, R résidu volumique et m_i mesure de bord du nœud.

    Les nœuds de ζ sont exclus; la valeur d'une face est la moyenne sur ses
    nœuds restants (NaN si tous ses nœuds sont dans ζ).
    """
    measure = lumped_boundary_measure(domain, faces)
    nodes = np.setdiff1d(np.unique(domain.face_nodes[faces]), domain.partition.interface_nodes)
    node_values = nodal_residual[nodes] / measure[nodes]
    lookup = np.full(domain.n_nodes, np.nan)
    lookup[nodes] = node_values
    per_face = lookup[domain.face_nodes[faces]]
    valid = np.isfinite(per_face)
    count = valid.sum(axis=1)
    total = np.where(valid, per_face, 0.0).sum(axis=1)
    face_flux = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return FluxTrace(
        label=label, node_ids=nodes, node_values=node_values, face_ids=np.asarray(faces),
        face_values=face_flux, face_measures=domain.face_measures[faces].copy(),
    )


def boundary_flux(domain: DiscreteDomain, p: float, eigenpair: Eigenpair,
                  label: LabelLike = BoundaryLabel.DIRICHLET) -> FluxTrace:
    """
    Flux normal |∇u|^{p-2}∂_ν u sur les faces d'étiquette ``label``.

    Sur Γ_D le flux doit être strictement négatif (lemme de Hopf); une
    violation est journalisée et reportée dans ``hopf_ok``.
    """
    if not eigenpair.domain.same_as(domain):
        raise InvalidParameter("Eigenpair was computed on another domain")
    if check_exponent(p) != eigenpair.p:
        raise InvalidParameter(f"Eigenpair exponent {eigenpair.p} differs from p={p}")
    label = parse_label(label)
    faces = domain.faces_with_label(label)
    if faces.size == 0:
        raise InvalidParameter(f"No boundary face labeled {label.name}")
    form = PLaplaceForm(domain, p, eigenpair.h, eigenpair.sigma)
    residual = form.volume_gradient(eigenpair.u) - eigenpair.eigenvalue * form.load(eigenpair.u)
    trace = consistent_flux_trace(domain, residual, faces, label)
    if label in (BoundaryLabel.DIRICHLET, BoundaryLabel.OUTER):
        trace.hopf_ok = bool(np.all(trace.node_values < 0))
        if not trace.hopf_ok:
            logger.warning(f"⚠️ Hopf check failed: {int(np.sum(trace.node_values >= 0))} "
                           f"nonnegative flux value(s) on {label.name}")
    return trace


# =============================================================================
# DEUX PHASES
# =============================================================================

def two_phase_eigenpair(coated: CoatedDomain, p: float, settings: Optional[EigenSolveSettings] = None,
                        solver: Optional[PLaplaceEigenSolver] = None) -> TwoPhaseResult:
    """
    Problème à deux phases sur Ω_ε: conductivité 1 dans le substrat,
    ε^{p-1} dans le revêtement, Dirichlet sur Γ_D et sur le bord extérieur.
    """
    p = check_exponent(p)
    extended = coated.extended
    sigma = np.where(extended.region_tags == int(RegionTag.COATING), coated.epsilon ** (p - 1), 1.0)
    solver = solver or PLaplaceEigenSolver(settings)
    no_robin = RobinField.constant(extended, 0.0)
    pair = solver.solve(extended, p, no_robin, sigma=sigma)
    coating_mass = lp_integral(extended, pair.u, p, elements=coated.layer_elements)
    return TwoPhaseResult(
        eigenvalue=pair.eigenvalue,
        phi=pair.u,
        coating_mass=coating_mass,
        substrate_restriction=pair.u[coated.substrate_nodes],
        epsilon=coated.epsilon,
        eigenpair=pair,
    )
