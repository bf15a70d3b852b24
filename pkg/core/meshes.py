"""
Générateurs de maillages plans
==============================
Carré unité, disque (hexagone raffiné, nœuds de bord projetés sur le cercle)
et couronne structurée. Tous les triangles sont orientés dans le sens
trigonométrique.
"""

from typing import Dict, List, Sequence, Tuple

import numpy as np

from core.domain import BoundaryLabel, DiscreteDomain, LabelLike, build_planar_domain, parse_label
from core.errors import InvalidMesh, InvalidParameter

SQUARE_SIDES = ("bottom", "right", "top", "left")


def unit_square_mesh(n: int, gamma_sides: Sequence[str] = ("top",)) -> DiscreteDomain:
    """
    Carré (0, 1)² découpé en 2n² triangles.

    Args:
        n: Nombre de cellules par côté
        gamma_sides: Côtés portant γ parmi bottom/right/top/left; les autres forment Γ_D
    """
    if n < 1:
        raise InvalidMesh(f"n must be ≥ 1 (got {n})")
    unknown = set(gamma_sides) - set(SQUARE_SIDES)
    if unknown:
        raise InvalidParameter(f"Unknown square side(s): {sorted(unknown)}")
    grid = np.linspace(0.0, 1.0, n + 1)
    xx, yy = np.meshgrid(grid, grid)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    def index(i, j):
        return j * (n + 1) + i

    triangles = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = index(i, j), index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)
            triangles += [(a, b, c), (a, c, d)]

    def label(side):
        return BoundaryLabel.ROBIN if side in gamma_sides else BoundaryLabel.DIRICHLET

    faces = []
    for k in range(n):
        faces.append((index(k, 0), index(k + 1, 0), label("bottom")))
        faces.append((index(n, k), index(n, k + 1), label("right")))
        faces.append((index(k + 1, n), index(k, n), label("top")))
        faces.append((index(0, k + 1), index(0, k), label("left")))
    return build_planar_domain(vertices, np.array(triangles), faces)


def _refine(vertices: List[np.ndarray], triangles: np.ndarray, boundary: set, radius: float):
    midpoint: Dict[Tuple[int, int], int] = {}
    new_boundary = set()

    def middle(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            new = len(vertices)
            point = 0.5 * (vertices[a] + vertices[b])
            if key in boundary:
                point = point * (radius / np.linalg.norm(point))
                new_boundary.update({(min(a, new), max(a, new)), (min(b, new), max(b, new))})
            midpoint[key] = new
            vertices.append(point)
        return midpoint[key]

    refined = []
    for a, b, c in triangles:
        ab, bc, ca = middle(a, b), middle(b, c), middle(c, a)
        refined += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return np.array(refined), new_boundary


def disk_mesh(levels: int, radius: float = 1.0, gamma_fraction: float = 1.0) -> DiscreteDomain:
    """
    Disque de rayon ``radius``: hexagone raffiné ``levels`` fois.

    Les arêtes de bord dont le milieu a un angle (dans [0, 2π)) inférieur à
    2π·gamma_fraction portent γ, les autres Γ_D.
    """
    if levels < 0 or radius <= 0:
        raise InvalidMesh("disk_mesh requires levels ≥ 0 and radius > 0")
    if not 0.0 <= gamma_fraction <= 1.0:
        raise InvalidParameter(f"gamma_fraction must lie in [0, 1] (got {gamma_fraction})")
    angles = np.arange(6) * np.pi / 3
    vertices = [np.zeros(2)] + [radius * np.array([np.cos(t), np.sin(t)]) for t in angles]
    triangles = np.array([(0, 1 + k, 1 + (k + 1) % 6) for k in range(6)])
    boundary = {(min(1 + k, 1 + (k + 1) % 6), max(1 + k, 1 + (k + 1) % 6)) for k in range(6)}
    for _ in range(levels):
        triangles, boundary = _refine(vertices, triangles, boundary, radius)
    points = np.array(vertices)

    faces = []
    for a, b in boundary:
        mid = 0.5 * (points[a] + points[b])
        theta = np.mod(np.arctan2(mid[1], mid[0]), 2 * np.pi)
        label = BoundaryLabel.ROBIN if theta < 2 * np.pi * gamma_fraction else BoundaryLabel.DIRICHLET
        faces.append((a, b, label))
    return build_planar_domain(points, triangles, faces)


def annulus_mesh(n_theta: int, n_r: int, r_inner: float, r_outer: float,
                 inner_label: LabelLike = BoundaryLabel.DIRICHLET,
                 outer_label: LabelLike = BoundaryLabel.ROBIN) -> DiscreteDomain:
    """Couronne r_inner < |x| < r_outer, grille polaire n_r × n_theta."""
    if n_theta < 3 or n_r < 1:
        raise InvalidMesh("annulus_mesh requires n_theta ≥ 3 and n_r ≥ 1")
    if not 0 < r_inner < r_outer:
        raise InvalidMesh(f"annulus_mesh requires 0 < r_inner < r_outer (got {r_inner}, {r_outer})")
    radii = np.linspace(r_inner, r_outer, n_r + 1)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, theta, indexing='ij')
    vertices = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])

    def index(i, j):
        return i * n_theta + (j % n_theta)

    triangles = []
    for i in range(n_r):
        for j in range(n_theta):
            p00, p01 = index(i, j), index(i, j + 1)
            p10, p11 = index(i + 1, j), index(i + 1, j + 1)
            triangles += [(p00, p10, p11), (p00, p11, p01)]
    inner, outer = parse_label(inner_label), parse_label(outer_label)
    faces = [(index(0, j), index(0, j + 1), inner) for j in range(n_theta)]
    faces += [(index(n_r, j), index(n_r, j + 1), outer) for j in range(n_theta)]
    return build_planar_domain(vertices, np.array(triangles), faces)
