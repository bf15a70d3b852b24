"""
Format texte des maillages
==========================
Lecture / écriture sans perte d'un DiscreteDomain::

    mesh <interval|radial|planar> <n>
    nodes <N>
    x [y]              (une ligne par nœud, '%.17g')
    elements <M>
    i j [k]
    boundary <K>
    i [j] <DIRICHLET|ROBIN|OUTER>
    regions <M>        (optionnel)
    <SUBSTRATE|COATING>

Les lignes vides et les commentaires (#) sont ignorés.
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from loguru import logger

from core.domain import DiscreteDomain, DomainMode, RegionTag, BoundaryLabel, domain_from_arrays
from core.errors import InvalidMesh


def write_mesh(domain: DiscreteDomain, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# pRobin mesh", f"mesh {domain.mode.value} {domain.space_dim}", f"nodes {domain.n_nodes}"]
    lines += [" ".join(f"{value:.17g}" for value in row) for row in domain.nodes]
    lines.append(f"elements {domain.n_elements}")
    lines += [" ".join(str(int(v)) for v in row) for row in domain.elements]
    lines.append(f"boundary {domain.n_faces}")
    for row, label in zip(domain.face_nodes, domain.face_labels):
        lines.append(" ".join(str(int(v)) for v in row) + f" {BoundaryLabel(int(label)).name}")
    if np.any(domain.region_tags != int(RegionTag.SUBSTRATE)):
        lines.append(f"regions {domain.n_elements}")
        lines += [RegionTag(int(tag)).name for tag in domain.region_tags]
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')
    logger.debug(f"💾 Maillage écrit: {path}")
    return path


def _content_lines(text: str) -> List[Tuple[int, List[str]]]:
    result = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if line:
            result.append((number, line.split()))
    return result


def read_mesh(path: Union[str, Path]) -> DiscreteDomain:
    """Relit un maillage écrit par ``write_mesh`` (ou à la main)."""
    path = Path(path)
    if not path.exists():
        raise InvalidMesh(f"Mesh file not found: {path}")
    lines = _content_lines(path.read_text(encoding='utf-8'))
    cursor = 0

    def take_header(keyword: str, optional: bool = False):
        nonlocal cursor
        if cursor >= len(lines):
            if optional:
                return None
            raise InvalidMesh(f"{path}: missing '{keyword}' section")
        number, tokens = lines[cursor]
        if tokens[0] != keyword:
            if optional:
                return None
            raise InvalidMesh(f"{path}:{number}: expected '{keyword}', got '{tokens[0]}'")
        cursor += 1
        return number, tokens

    def take_rows(count: int, width: int, what: str):
        nonlocal cursor
        rows = lines[cursor:cursor + count]
        if len(rows) != count:
            raise InvalidMesh(f"{path}: truncated '{what}' section")
        for number, tokens in rows:
            if len(tokens) != width:
                raise InvalidMesh(f"{path}:{number}: expected {width} fields in '{what}'")
        cursor += count
        return rows

    try:
        number, header = take_header("mesh")
        mode = DomainMode(header[1])
        space_dim = int(header[2])
        gdim = 2 if mode == DomainMode.PLANAR else 1

        _, tokens = take_header("nodes")
        nodes = np.array([[float(v) for v in row] for _, row in take_rows(int(tokens[1]), gdim, "nodes")])
        _, tokens = take_header("elements")
        elements = np.array([[int(v) for v in row]
                             for _, row in take_rows(int(tokens[1]), gdim + 1, "elements")])
        _, tokens = take_header("boundary")
        boundary = take_rows(int(tokens[1]), gdim + 1, "boundary")
        faces = [[int(v) for v in row[:-1]] for _, row in boundary]
        labels = [BoundaryLabel[row[-1].upper()] for _, row in boundary]
        regions = None
        if take_header("regions", optional=True) is not None:
            _, tokens = lines[cursor - 1]
            regions = [RegionTag[row[0].upper()] for _, row in take_rows(int(tokens[1]), 1, "regions")]
    except (ValueError, KeyError, IndexError) as exc:
        raise InvalidMesh(f"{path}: malformed mesh file ({exc})")
    if cursor != len(lines):
        raise InvalidMesh(f"{path}:{lines[cursor][0]}: unexpected trailing content")

    return domain_from_arrays(mode, space_dim, nodes, elements, faces, labels, regions)
