"""
Domaines discrets
=================
Construction et représentation des domaines de calcul:

- intervalle (0, 1) en 1D,
- réduction radiale d'une boule / couronne de ℝⁿ (poids r^{n-1}),
- polygone triangulé en 2D (éléments P1).

Chaque domaine porte sa quadrature, ses faces de bord (normale sortante et
mesure) et la partition Γ_D / γ / ζ. Le revêtement mince Ω_ε = Ω ∪ Σ_ε est
obtenu par extrusion des faces de γ (``attach_coating``).

Les objets sont immuables après construction et peuvent être partagés entre
solveurs concurrents.
"""

import hashlib
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import cached_property
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import gamma as gamma_function

from core.errors import InvalidMesh, InvalidParameter, MeshFoldover


class DomainMode(Enum):
    """Mode géométrique du domaine."""
    INTERVAL = "interval"
    RADIAL = "radial"
    PLANAR = "planar"


class BoundaryLabel(IntEnum):
    """Étiquette d'une face de bord."""
    DIRICHLET = 0   # Γ_D, bord accessible
    ROBIN = 1       # γ, bord inaccessible
    OUTER = 2       # ∂Ω_ε, bord extérieur du revêtement (Dirichlet)


class RegionTag(IntEnum):
    """Région d'un élément."""
    SUBSTRATE = 0
    COATING = 1


class GammaEnd(Enum):
    """Extrémités de l'intervalle portant γ."""
    LEFT = "left"
    RIGHT = "right"
    BOTH = "both"
    NONE = "none"


LabelLike = Union[BoundaryLabel, str, int]

_DIRICHLET_TYPE = (BoundaryLabel.DIRICHLET, BoundaryLabel.OUTER)


def parse_label(label: LabelLike) -> BoundaryLabel:
    """Convertit 'robin', 'ROBIN', 1 ou BoundaryLabel.ROBIN en BoundaryLabel."""
    if isinstance(label, BoundaryLabel):
        return label
    if isinstance(label, str):
        try:
            return BoundaryLabel[label.strip().upper()]
        except KeyError:
            raise InvalidParameter(f"Unknown boundary label '{label}'")
    try:
        return BoundaryLabel(int(label))
    except (ValueError, TypeError):
        raise InvalidParameter(f"Unknown boundary label '{label}'")


def sphere_area(space_dim: int) -> float:
    """Aire ω_{n-1} de la sphère unité de ℝⁿ."""
    return float(2.0 * np.pi ** (space_dim / 2.0) / gamma_function(space_dim / 2.0))


# =============================================================================
# QUADRATURE
# =============================================================================

@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Règle de quadrature sur l'élément de référence (coordonnées barycentriques)."""
    bary: np.ndarray      # (Q, n_local)
    weights: np.ndarray   # (Q,), somme = 1 (fraction de la taille de l'élément)

    @property
    def n_points(self) -> int:
        return self.weights.shape[0]


def _gauss_segment() -> QuadratureRule:
    s = np.array([0.5 - 0.5 * np.sqrt(0.6), 0.5, 0.5 + 0.5 * np.sqrt(0.6)])
    bary = np.column_stack([1.0 - s, s])
    return QuadratureRule(bary=bary, weights=np.array([5.0, 8.0, 5.0]) / 18.0)


def _dunavant_triangle() -> QuadratureRule:
    # règle à 6 points, exacte au degré 4
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    bary = np.array([
        [a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
        [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b],
    ])
    return QuadratureRule(bary=bary, weights=np.array([wa, wa, wa, wb, wb, wb]))


SEGMENT_RULE = _gauss_segment()
TRIANGLE_RULE = _dunavant_triangle()
POINT_RULE = QuadratureRule(bary=np.ones((1, 1)), weights=np.ones(1))


# =============================================================================
# TYPES
# =============================================================================

@dataclass(frozen=True, eq=False)
class BoundaryPartition:
    """Partition des faces de bord: Γ_D, γ, bord extérieur et nœuds d'interface ζ."""
    dirichlet_faces: np.ndarray
    robin_faces: np.ndarray
    outer_faces: np.ndarray
    interface_nodes: np.ndarray

    @property
    def constrained_faces(self) -> np.ndarray:
        """Faces où u = 0 est imposé (Γ_D et bord extérieur)."""
        return np.sort(np.concatenate([self.dirichlet_faces, self.outer_faces]))

    def faces(self, label: LabelLike) -> np.ndarray:
        label = parse_label(label)
        if label == BoundaryLabel.DIRICHLET:
            return self.dirichlet_faces
        if label == BoundaryLabel.ROBIN:
            return self.robin_faces
        return self.outer_faces


@dataclass(frozen=True, eq=False)
class DiscreteDomain:
    """
    Domaine discret P1.

    Les tableaux sont en lecture seule. ``quad_weights`` contient les poids
    physiques (taille de l'élément, poids radial et ω_{n-1} inclus) de sorte
    que Σ quad_weights · f(x_q) ≈ ∫_Ω f dx en dimension n.
    """
    mode: DomainMode
    space_dim: int
    nodes: np.ndarray                 # (N, g)
    elements: np.ndarray              # (M, g+1)
    region_tags: np.ndarray           # (M,)
    face_nodes: np.ndarray            # (K, g)
    face_labels: np.ndarray           # (K,)
    face_normals: np.ndarray          # (K, g)
    face_measures: np.ndarray         # (K,)
    partition: BoundaryPartition
    element_sizes: np.ndarray         # (M,) longueur ou aire brute
    element_grads: np.ndarray         # (M, g+1, g) gradients des fonctions de base
    quad_rule: QuadratureRule
    quad_weights: np.ndarray          # (M, Q)
    radial_weight: np.ndarray         # (M, Q)
    face_rule: QuadratureRule
    face_quad_weights: np.ndarray     # (K, Qb)

    def __repr__(self):
        return (f"DiscreteDomain({self.mode.value}, n={self.space_dim}, "
                f"nodes={self.n_nodes}, elements={self.n_elements}, faces={self.n_faces})")

    @property
    def geometric_dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_nodes.shape[0]

    @cached_property
    def element_volumes(self) -> np.ndarray:
        """Volume pondéré de chaque élément (∫_e dx en dimension n)."""
        return self.quad_weights.sum(axis=1)

    @cached_property
    def constrained_nodes(self) -> np.ndarray:
        faces = self.partition.constrained_faces
        return np.unique(self.face_nodes[faces]) if faces.size else np.zeros(0, dtype=int)

    @cached_property
    def free_mask(self) -> np.ndarray:
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.constrained_nodes] = False
        return mask

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.free_mask)

    @cached_property
    def robin_nodes(self) -> np.ndarray:
        faces = self.partition.robin_faces
        return np.unique(self.face_nodes[faces]) if faces.size else np.zeros(0, dtype=int)

    def faces_with_label(self, label: LabelLike) -> np.ndarray:
        return self.partition.faces(label)

    def boundary_measure(self, label: Optional[LabelLike] = None) -> float:
        """Mesure de Γ_D, γ, du bord extérieur, ou du bord entier (label=None)."""
        if label is None:
            return float(self.face_measures.sum())
        return float(self.face_measures[self.faces_with_label(label)].sum())

    @cached_property
    def fingerprint(self) -> str:
        """Empreinte stable de la géométrie (égalité de domaines entre runs)."""
        digest = hashlib.sha1()
        digest.update(f"{self.mode.value}:{self.space_dim}".encode())
        for array in (self.nodes, self.elements, self.region_tags, self.face_nodes, self.face_labels):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()

    def same_as(self, other: "DiscreteDomain") -> bool:
        return other is self or other.fingerprint == self.fingerprint


@dataclass(frozen=True, eq=False)
class ThicknessProfile:
    """Épaisseur relative ρ > 0 par face de γ (l'épaisseur physique vaut ε·ρ)."""
    rho_values: np.ndarray

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.rho_values, dtype=float)).copy()
        if values.ndim != 1 or not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise InvalidParameter("rho must be finite and strictly positive on every γ-face")
        values.setflags(write=False)
        object.__setattr__(self, 'rho_values', values)

    @classmethod
    def constant(cls, domain: DiscreteDomain, rho: float) -> "ThicknessProfile":
        return cls(np.full(domain.partition.robin_faces.size, float(rho)))


@dataclass(frozen=True, eq=False)
class CoatedDomain:
    """Domaine revêtu Ω_ε = Ω ∪ Σ_ε."""
    base: DiscreteDomain
    epsilon: float
    rho: ThicknessProfile
    n_layer_cells: int
    extended: DiscreteDomain
    layer_elements: np.ndarray
    outer_dirichlet_faces: np.ndarray

    @property
    def substrate_nodes(self) -> np.ndarray:
        # les nœuds de la base gardent leurs indices dans le domaine étendu
        return np.arange(self.base.n_nodes)

    @property
    def coating_volume(self) -> float:
        return float(self.extended.element_volumes[self.layer_elements].sum())

    def __repr__(self):
        return (f"CoatedDomain(ε={self.epsilon:g}, layers={self.n_layer_cells}, "
                f"coating_elements={self.layer_elements.size})")


# =============================================================================
# ASSEMBLAGE GÉOMÉTRIQUE
# =============================================================================

def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.setflags(write=False)


def _segment_geometry(nodes: np.ndarray, elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    x = nodes[:, 0]
    lengths = x[elements[:, 1]] - x[elements[:, 0]]
    if np.any(lengths == 0):
        raise InvalidMesh("Degenerate segment (zero length)")
    flipped = lengths < 0
    if np.any(flipped):
        elements = elements.copy()
        elements[flipped] = elements[flipped][:, ::-1]
        lengths = np.abs(lengths)
    grads = np.stack([-1.0 / lengths, 1.0 / lengths], axis=1)[:, :, None]
    return elements, lengths, grads


def _triangle_signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = nodes[triangles[:, 0]], nodes[triangles[:, 1]], nodes[triangles[:, 2]]
    e1, e2 = p1 - p0, p2 - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _triangle_geometry(nodes: np.ndarray, elements: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    areas = _triangle_signed_areas(nodes, elements)
    if np.any(areas == 0):
        raise InvalidMesh("Degenerate triangle (zero area)")
    flipped = areas < 0
    if np.any(flipped):
        elements = elements.copy()
        elements[flipped] = elements[flipped][:, [0, 2, 1]]
        areas = np.abs(areas)
    p0 = nodes[elements[:, 0]]
    jac = np.stack([nodes[elements[:, 1]] - p0, nodes[elements[:, 2]] - p0], axis=2)  # colonnes
    inv = np.linalg.inv(jac)                                                            # lignes = ∇λ1, ∇λ2
    grads = np.concatenate([-(inv[:, 0:1, :] + inv[:, 1:2, :]), inv], axis=1)
    return elements, areas, grads


def _segment_faces(nodes, elements, face_nodes, mode, space_dim, radial_origin_ok):
    """Faces ponctuelles en 1D: contrôle de conformité, normales et mesures."""
    n_nodes = nodes.shape[0]
    degree = np.bincount(elements.ravel(), minlength=n_nodes)
    if np.any(degree > 2):
        raise InvalidMesh("Non-conforming 1D mesh (node shared by more than two segments)")
    boundary = set(np.flatnonzero(degree == 1).tolist())
    labeled = face_nodes[:, 0].tolist()
    if len(set(labeled)) != len(labeled):
        raise InvalidMesh("Boundary node labeled twice")
    for node in labeled:
        if node not in boundary:
            raise InvalidMesh(f"Orphan boundary face at node {node} (not an end point)")
    missing = boundary - set(labeled)
    if radial_origin_ok:
        missing = {node for node in missing if nodes[node, 0] != 0.0}
    if missing:
        raise InvalidMesh(f"Unlabeled boundary node(s): {sorted(missing)}")

    other = np.full(n_nodes, -1)
    for column, opposite in ((0, 1), (1, 0)):
        other[elements[:, column]] = elements[:, opposite]
    x = nodes[:, 0]
    face = face_nodes[:, 0]
    normals = np.sign(x[face] - x[other[face]])[:, None]
    if mode == DomainMode.RADIAL:
        if np.any(x[face] <= 0):
            raise InvalidMesh("Radial boundary face at r = 0")
        measures = sphere_area(space_dim) * x[face] ** (space_dim - 1)
    else:
        measures = np.ones(face.size)
    return face_nodes, normals, measures


def _triangle_faces(nodes, elements, face_nodes):
    """Arêtes de bord en 2D: conformité, orientation, normales sortantes et longueurs."""
    n_nodes = nodes.shape[0]
    directed = np.concatenate([elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]])
    keys = np.sort(directed, axis=1)
    codes = keys[:, 0].astype(np.int64) * n_nodes + keys[:, 1]
    unique_codes, first, counts = np.unique(codes, return_index=True, return_counts=True)
    if np.any(counts > 2):
        raise InvalidMesh("Non-conforming triangulation (edge shared by more than two triangles)")

    face_keys = np.sort(face_nodes, axis=1)
    face_codes = face_keys[:, 0].astype(np.int64) * n_nodes + face_keys[:, 1]
    if np.unique(face_codes).size != face_codes.size:
        raise InvalidMesh("Boundary edge labeled twice")
    position = np.searchsorted(unique_codes, face_codes)
    position = np.clip(position, 0, unique_codes.size - 1)
    found = unique_codes[position] == face_codes
    if not np.all(found):
        bad = face_nodes[np.flatnonzero(~found)[0]]
        raise InvalidMesh(f"Orphan edge {tuple(int(v) for v in bad)} (not an edge of the triangulation)")
    if np.any(counts[position] != 1):
        bad = face_nodes[np.flatnonzero(counts[position] != 1)[0]]
        raise InvalidMesh(f"Labeled edge {tuple(int(v) for v in bad)} is interior")
    n_boundary = int(np.sum(counts == 1))
    if n_boundary != face_nodes.shape[0]:
        raise InvalidMesh(f"{n_boundary - face_nodes.shape[0]} unlabeled boundary edge(s)")

    oriented = directed[first[position]]
    delta = nodes[oriented[:, 1]] - nodes[oriented[:, 0]]
    lengths = np.hypot(delta[:, 0], delta[:, 1])
    normals = np.column_stack([delta[:, 1], -delta[:, 0]]) / lengths[:, None]
    return oriented, normals, lengths


def domain_from_arrays(mode: Union[DomainMode, str], space_dim: int, nodes, elements, face_nodes,
                       face_labels, region_tags=None) -> DiscreteDomain:
    """
    Construit et valide un DiscreteDomain à partir de tableaux bruts.

    Utilisé par les constructeurs, l'extrusion du revêtement et la lecture
    des fichiers de maillage.
    """
    mode = DomainMode(mode) if not isinstance(mode, DomainMode) else mode
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    geometric_dim = 2 if mode == DomainMode.PLANAR else 1
    if nodes.ndim != 2 or nodes.shape[1] != geometric_dim or not np.all(np.isfinite(nodes)):
        raise InvalidMesh(f"Node coordinates must be finite {geometric_dim}-tuples")
    elements = np.asarray(elements, dtype=np.int64)
    if elements.ndim != 2 or elements.shape[1] != geometric_dim + 1 or elements.shape[0] == 0:
        raise InvalidMesh(f"Elements must be non-empty {geometric_dim + 1}-tuples")
    n_nodes = nodes.shape[0]
    if elements.min() < 0 or elements.max() >= n_nodes:
        raise InvalidMesh("Element index out of range")
    if np.any(np.bincount(elements.ravel(), minlength=n_nodes) == 0):
        raise InvalidMesh("Orphan node (not referenced by any element)")

    face_nodes = np.asarray(face_nodes, dtype=np.int64).reshape(-1, geometric_dim)
    labels = np.array([int(parse_label(label)) for label in face_labels], dtype=np.int64)
    if labels.size != face_nodes.shape[0]:
        raise InvalidMesh("One label per boundary face is required")
    if face_nodes.size and (face_nodes.min() < 0 or face_nodes.max() >= n_nodes):
        raise InvalidMesh("Face index out of range")

    if region_tags is None:
        region_tags = np.full(elements.shape[0], int(RegionTag.SUBSTRATE), dtype=np.int64)
    region_tags = np.asarray([int(tag) for tag in region_tags], dtype=np.int64)
    if region_tags.size != elements.shape[0]:
        raise InvalidMesh("One region tag per element is required")

    if mode == DomainMode.PLANAR:
        space_dim = 2
        elements, sizes, grads = _triangle_geometry(nodes, elements)
        face_nodes, normals, measures = _triangle_faces(nodes, elements, face_nodes)
        rule, face_rule = TRIANGLE_RULE, SEGMENT_RULE
    else:
        if mode == DomainMode.INTERVAL:
            space_dim = 1
        elif space_dim < 2:
            raise InvalidParameter("Radial mode requires space_dim ≥ 2")
        elements, sizes, grads = _segment_geometry(nodes, elements)
        face_nodes, normals, measures = _segment_faces(
            nodes, elements, face_nodes, mode, space_dim, radial_origin_ok=(mode == DomainMode.RADIAL))
        rule, face_rule = SEGMENT_RULE, POINT_RULE

    # points de quadrature physiques et poids radiaux
    points = np.einsum('qa,mag->mqg', rule.bary, nodes[elements])
    if mode == DomainMode.RADIAL:
        radial = points[:, :, 0] ** (space_dim - 1)
        scale = sphere_area(space_dim)
        if np.any(radial <= 0):
            raise InvalidMesh("Radial weight must be positive at every quadrature point")
    else:
        radial = np.ones(points.shape[:2])
        scale = 1.0
    quad_weights = scale * rule.weights[None, :] * sizes[:, None] * radial
    face_quad_weights = face_rule.weights[None, :] * measures[:, None]

    is_label = {label: np.flatnonzero(labels == int(label)) for label in BoundaryLabel}
    constrained = np.concatenate([is_label[BoundaryLabel.DIRICHLET], is_label[BoundaryLabel.OUTER]])
    robin = is_label[BoundaryLabel.ROBIN]
    interface = np.intersect1d(np.unique(face_nodes[constrained]), np.unique(face_nodes[robin])) \
        if constrained.size and robin.size else np.zeros(0, dtype=np.int64)
    partition = BoundaryPartition(
        dirichlet_faces=is_label[BoundaryLabel.DIRICHLET],
        robin_faces=robin,
        outer_faces=is_label[BoundaryLabel.OUTER],
        interface_nodes=interface,
    )
    _freeze(nodes, elements, region_tags, face_nodes, labels, normals, measures, sizes, grads,
            quad_weights, radial, face_quad_weights, partition.dirichlet_faces, partition.robin_faces,
            partition.outer_faces, partition.interface_nodes)

    return DiscreteDomain(
        mode=mode, space_dim=int(space_dim), nodes=nodes, elements=elements, region_tags=region_tags,
        face_nodes=face_nodes, face_labels=labels, face_normals=normals, face_measures=measures,
        partition=partition, element_sizes=sizes, element_grads=grads, quad_rule=rule,
        quad_weights=quad_weights, radial_weight=radial, face_rule=face_rule,
        face_quad_weights=face_quad_weights,
    )


# =============================================================================
# CONSTRUCTEURS
# =============================================================================

def build_interval_domain(n_cells: int, gamma_end: Union[GammaEnd, str] = GammaEnd.RIGHT) -> DiscreteDomain:
    """
    Maillage uniforme de (0, 1).

    Args:
        n_cells: Nombre de segments (≥ 2)
        gamma_end: Extrémité(s) portant γ; les autres forment Γ_D
    """
    if int(n_cells) < 2:
        raise InvalidMesh(f"n_cells must be ≥ 2 (got {n_cells})")
    n_cells = int(n_cells)
    gamma_end = GammaEnd(gamma_end.lower()) if isinstance(gamma_end, str) else gamma_end
    nodes = np.linspace(0.0, 1.0, n_cells + 1)
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    left = BoundaryLabel.ROBIN if gamma_end in (GammaEnd.LEFT, GammaEnd.BOTH) else BoundaryLabel.DIRICHLET
    right = BoundaryLabel.ROBIN if gamma_end in (GammaEnd.RIGHT, GammaEnd.BOTH) else BoundaryLabel.DIRICHLET
    domain = domain_from_arrays(DomainMode.INTERVAL, 1, nodes, elements, [[0], [n_cells]], [left, right])
    logger.debug(f"📐 Intervalle: {n_cells} cellules, γ={gamma_end.value}")
    return domain


def build_radial_domain(n_cells: int, r_inner: float, r_outer: float, space_dim: int,
                        inner_label: Optional[LabelLike] = BoundaryLabel.DIRICHLET,
                        outer_label: LabelLike = BoundaryLabel.ROBIN) -> DiscreteDomain:
    """
    Réduction radiale d'une couronne (ou d'une boule si r_inner = 0) de ℝⁿ.

    La sphère intérieure n'est pas étiquetée quand r_inner = 0.
    """
    if r_inner < 0 or r_inner >= r_outer:
        raise InvalidMesh(f"Radial domain requires 0 ≤ r_inner < r_outer (got {r_inner}, {r_outer})")
    if int(n_cells) < 2:
        raise InvalidMesh(f"n_cells must be ≥ 2 (got {n_cells})")
    if int(space_dim) < 2:
        raise InvalidParameter(f"space_dim must be ≥ 2 (got {space_dim})")
    n_cells = int(n_cells)
    nodes = np.linspace(float(r_inner), float(r_outer), n_cells + 1)
    elements = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    faces, labels = [[n_cells]], [parse_label(outer_label)]
    if r_inner > 0:
        if inner_label is None:
            raise InvalidMesh("Inner sphere of an annulus must be labeled")
        faces.insert(0, [0])
        labels.insert(0, parse_label(inner_label))
    return domain_from_arrays(DomainMode.RADIAL, int(space_dim), nodes, elements, faces, labels)


def build_planar_domain(vertices, triangles, face_labels) -> DiscreteDomain:
    """
    Domaine plan triangulé.

    Args:
        vertices: (N, 2) coordonnées
        triangles: (M, 3) indices
        face_labels: dict {(i, j): label} ou séquence de (i, j, label)
    """
    if isinstance(face_labels, dict):
        items = [(int(i), int(j), label) for (i, j), label in face_labels.items()]
    else:
        items = [(int(i), int(j), label) for i, j, label in face_labels]
    faces = [[i, j] for i, j, _ in items]
    labels = [label for _, _, label in items]
    return domain_from_arrays(DomainMode.PLANAR, 2, vertices, triangles, faces, labels)


# =============================================================================
# REVÊTEMENT
# =============================================================================

def _node_offsets(base: DiscreteDomain, rho: ThicknessProfile, epsilon: float):
    """Direction et épaisseur d'extrusion par nœud de γ (moyenne des faces adjacentes)."""
    robin = base.partition.robin_faces
    gamma_nodes = base.robin_nodes
    position = np.searchsorted(gamma_nodes, base.face_nodes[robin])
    normal_sum = np.zeros((gamma_nodes.size, base.geometric_dim))
    thickness_sum = np.zeros(gamma_nodes.size)
    count = np.zeros(gamma_nodes.size)
    for column in range(position.shape[1]):
        np.add.at(normal_sum, position[:, column], base.face_normals[robin])
        np.add.at(thickness_sum, position[:, column], epsilon * rho.rho_values)
        np.add.at(count, position[:, column], 1.0)
    norms = np.linalg.norm(normal_sum, axis=1)
    if np.any(norms < 1e-12):
        raise MeshFoldover("Opposite γ-face normals cancel at a node")
    return gamma_nodes, normal_sum / norms[:, None], thickness_sum / count, count


def attach_coating(base: DiscreteDomain, rho: ThicknessProfile, epsilon: float,
                   n_layer_cells: int = 4) -> CoatedDomain:
    """
    Extrude chaque face de γ le long de sa normale sortante sur une épaisseur ε·ρ.

    Les faces extérieures deviennent OUTER (Dirichlet) et γ devient intérieur.
    """
    robin = base.partition.robin_faces
    if robin.size == 0:
        raise InvalidParameter("attach_coating requires a nonempty γ")
    if not np.isfinite(epsilon) or epsilon <= 0:
        raise InvalidParameter(f"epsilon must be > 0 (got {epsilon})")
    if int(n_layer_cells) < 1:
        raise InvalidParameter(f"n_layer_cells must be ≥ 1 (got {n_layer_cells})")
    if rho.rho_values.size != robin.size:
        raise InvalidParameter(f"rho has {rho.rho_values.size} values for {robin.size} γ-faces")
    n_layer_cells = int(n_layer_cells)

    gamma_nodes, directions, thickness, adjacency = _node_offsets(base, rho, float(epsilon))
    n_base = base.n_nodes
    n_gamma = gamma_nodes.size
    # layer_index[j, i] = indice du nœud i de γ dans la couche j (couche 0 = γ)
    layer_index = np.empty((n_layer_cells + 1, n_gamma), dtype=np.int64)
    layer_index[0] = gamma_nodes
    layer_index[1:] = n_base + np.arange(n_layer_cells * n_gamma).reshape(n_layer_cells, n_gamma)
    fractions = np.arange(1, n_layer_cells + 1) / n_layer_cells
    new_coords = (base.nodes[gamma_nodes][None, :, :]
                  + fractions[:, None, None] * thickness[None, :, None] * directions[None, :, :])
    if base.mode == DomainMode.RADIAL and np.any(new_coords[..., 0] <= 0):
        raise MeshFoldover("Coating crosses the center of the radial domain")
    nodes = np.vstack([base.nodes, new_coords.reshape(-1, base.geometric_dim)])

    keep = np.setdiff1d(np.arange(base.n_faces), robin)
    faces: List[List[int]] = base.face_nodes[keep].tolist()
    labels: List[int] = base.face_labels[keep].tolist()

    if base.geometric_dim == 1:
        column = layer_index  # (L+1, n_gamma)
        new_elements = np.stack([column[:-1].T, column[1:].T], axis=2).reshape(-1, 2)
        faces += [[int(v)] for v in column[-1]]
        labels += [int(BoundaryLabel.OUTER)] * n_gamma
    else:
        local = np.searchsorted(gamma_nodes, base.face_nodes[robin])  # (F, 2) orientation CCW
        triangles = []
        for j in range(n_layer_cells):
            a0, b0 = layer_index[j][local[:, 0]], layer_index[j][local[:, 1]]
            a1, b1 = layer_index[j + 1][local[:, 0]], layer_index[j + 1][local[:, 1]]
            triangles.append(np.column_stack([b0, a0, a1]))
            triangles.append(np.column_stack([b0, a1, b1]))
        new_elements = np.vstack(triangles)
        if np.any(_triangle_signed_areas(nodes, new_elements) <= 0):
            raise MeshFoldover("Coating extrusion folds over (negative element area)")
        top = layer_index[-1]
        faces += np.column_stack([top[local[:, 0]], top[local[:, 1]]]).tolist()
        labels += [int(BoundaryLabel.OUTER)] * robin.size
        # flancs aux extrémités de γ (nœuds de ζ)
        for i in np.flatnonzero(adjacency == 1):
            for j in range(n_layer_cells):
                faces.append([int(layer_index[j, i]), int(layer_index[j + 1, i])])
                labels.append(int(BoundaryLabel.OUTER))

    elements = np.vstack([base.elements, new_elements])
    tags = np.concatenate([base.region_tags,
                           np.full(new_elements.shape[0], int(RegionTag.COATING), dtype=np.int64)])
    extended = domain_from_arrays(base.mode, base.space_dim, nodes, elements, faces, labels, tags)
    layer_elements = np.flatnonzero(extended.region_tags == int(RegionTag.COATING))
    logger.debug(f"🧱 Revêtement ε={epsilon:g}: {layer_elements.size} éléments, {n_layer_cells} couches")
    return CoatedDomain(
        base=base, epsilon=float(epsilon), rho=rho, n_layer_cells=n_layer_cells, extended=extended,
        layer_elements=layer_elements, outer_dirichlet_faces=extended.partition.outer_faces,
    )


# =============================================================================
# INTÉGRATION DE BORD
# =============================================================================

def integrate_boundary(domain: DiscreteDomain, label: LabelLike, integrand) -> float:
    """∫_label f dσ pour f constante par face (scalaire ou tableau d'une valeur par face)."""
    faces = domain.faces_with_label(label)
    values = np.broadcast_to(np.asarray(integrand, dtype=float), (faces.size,)) \
        if np.ndim(integrand) == 0 else np.asarray(integrand, dtype=float)
    if values.shape != (faces.size,):
        raise InvalidParameter(f"Integrand needs {faces.size} face values (got {values.shape})")
    return float(np.dot(domain.face_measures[faces], values))


def gamma_coordinates(domain: DiscreteDomain) -> np.ndarray:
    """
    Coordonnée curviligne normalisée s ∈ [0, 1] du milieu de chaque face de γ.

    En 2D les arêtes sont parcourues en chaîne: depuis une extrémité libre
    (plus petit indice), ou pour une boucle fermée depuis le nœud d'angle
    minimal autour du barycentre de γ, dans le sens trigonométrique.
    """
    robin = domain.partition.robin_faces
    if robin.size == 0:
        return np.zeros(0)
    if domain.geometric_dim == 1:
        x = domain.nodes[domain.face_nodes[robin, 0], 0]
        span = x.max() - x.min()
        return (x - x.min()) / span if span > 0 else np.zeros(robin.size)

    edges = domain.face_nodes[robin]
    lengths = domain.face_measures[robin]
    incident: Dict[int, List[int]] = {}
    for f, (a, b) in enumerate(edges.tolist()):
        incident.setdefault(a, []).append(f)
        incident.setdefault(b, []).append(f)
    gamma_nodes = np.array(sorted(incident))
    center = domain.nodes[gamma_nodes].mean(axis=0)
    rel = domain.nodes - center
    angle = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2 * np.pi)

    visited = np.zeros(robin.size, dtype=bool)
    start_arc = np.zeros(robin.size)
    travelled = 0.0
    while not visited.all():
        open_ends = [n for n in gamma_nodes
                     if sum(not visited[f] for f in incident[n]) == 1 and len(incident[n]) == 1]
        if open_ends:
            node = int(min(open_ends))
            next_faces = [f for f in incident[node] if not visited[f]]
        else:
            pending = np.unique(edges[~visited])
            node = int(pending[np.argmin(angle[pending])])
            candidates = [f for f in incident[node] if not visited[f]]
            others = [int(edges[f][1] if edges[f][0] == node else edges[f][0]) for f in candidates]
            turn = [np.mod(angle[o] - angle[node], 2 * np.pi) for o in others]
            next_faces = [candidates[int(np.argmin(turn))]]
        while next_faces:
            f = next_faces[0]
            visited[f] = True
            start_arc[f] = travelled
            travelled += lengths[f]
            node = int(edges[f][1] if edges[f][0] == node else edges[f][0])
            next_faces = [g for g in incident[node] if not visited[g]]
    return (start_arc + 0.5 * lengths) / travelled
