"""
Mesures sur le bord accessible
==============================
Opérateur direct h ↦ (λ₁(h), flux de u sur Γ_D), distance entre mesures et
format CSV des données.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from core.domain import BoundaryLabel, DiscreteDomain
from core.eigensolver import (
    EigenSolveSettings, Eigenpair, PLaplaceEigenSolver, RobinField, boundary_flux, check_exponent,
)
from core.errors import InvalidParameter
from utils.artifacts import CSV_FLOAT_FORMAT


class FluxNormKind(Enum):
    # norme ℓ^{p'} pondérée par la mesure des faces
    DISCRETE_DUAL = "discrete_dual"


@dataclass(eq=False)
class Measurement:
    """Donnée (λ, q) avec q le flux par face de Γ_D."""
    eigenvalue: float
    flux_trace: np.ndarray
    face_ids: np.ndarray
    face_weights: np.ndarray
    p: float
    flux_norm_kind: FluxNormKind = FluxNormKind.DISCRETE_DUAL

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.eigenvalue], self.flux_trace])

    def weights_vector(self) -> np.ndarray:
        return np.concatenate([[1.0], self.face_weights])

    def with_values(self, eigenvalue: float, flux_trace: np.ndarray) -> "Measurement":
        return Measurement(float(eigenvalue), np.asarray(flux_trace, dtype=float), self.face_ids,
                           self.face_weights, self.p, self.flux_norm_kind)

    def to_frame(self) -> pd.DataFrame:
        columns = ['lambda'] + [str(int(face)) for face in self.face_ids]
        return pd.DataFrame([self.as_vector()], columns=columns)


def measure_with_pair(domain: DiscreteDomain, p: float, h: RobinField,
                      settings: Optional[EigenSolveSettings] = None,
                      initial: Optional[np.ndarray] = None) -> Tuple[Measurement, Eigenpair]:
    """Mesure et couple propre sous-jacent (réutilisé par la linéarisation)."""
    pair = PLaplaceEigenSolver(settings).solve(domain, p, h, initial=initial)
    trace = boundary_flux(domain, p, pair, BoundaryLabel.DIRICHLET)
    keep = trace.valid_faces
    measurement = Measurement(
        eigenvalue=pair.eigenvalue,
        flux_trace=trace.face_values[keep],
        face_ids=trace.face_ids[keep],
        face_weights=trace.face_measures[keep],
        p=p,
    )
    return measurement, pair


def forward_measure(domain: DiscreteDomain, p: float, h: RobinField,
                    settings: Optional[EigenSolveSettings] = None) -> Measurement:
    """F(h) = (λ₁(h), |∇u|^{p-2}∂_ν u sur Γ_D)."""
    return measure_with_pair(domain, p, h, settings)[0]


def measurement_distance(m1: Measurement, m2: Measurement) -> float:
    """|λ₁ - λ₂| + (Σ w_f |q₁ - q₂|^{p'})^{1/p'}, p' = p/(p-1)."""
    if m1.p != m2.p:
        raise InvalidParameter(f"Measurements use different exponents ({m1.p}, {m2.p})")
    if m1.face_ids.shape != m2.face_ids.shape or np.any(m1.face_ids != m2.face_ids):
        raise InvalidParameter("Measurements are defined on different Γ_D faces")
    dual = m1.p / (m1.p - 1)
    flux_gap = np.sum(m1.face_weights * np.abs(m1.flux_trace - m2.flux_trace) ** dual) ** (1 / dual)
    return float(abs(m1.eigenvalue - m2.eigenvalue) + flux_gap)


def write_measurement(measurement: Measurement, path: Union[str, Path]) -> Path:
    """CSV: en-tête 'lambda,<face_id>,…', une ligne de valeurs en '%.16e'."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    measurement.to_frame().to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


def read_measurement(path: Union[str, Path], domain: DiscreteDomain, p: float) -> Measurement:
    """Relit une mesure; les poids sont les mesures des faces de Γ_D du domaine."""
    check_exponent(p)
    path = Path(path)
    if not path.exists():
        raise InvalidParameter(f"Measurement file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if len(frame) != 1 or frame.columns[0] != 'lambda':
        raise InvalidParameter(f"{path}: expected one row with a leading 'lambda' column")
    try:
        face_ids = np.array([int(column) for column in frame.columns[1:]], dtype=np.int64)
    except ValueError:
        raise InvalidParameter(f"{path}: flux columns must be Γ_D face ids")
    dirichlet = set(domain.partition.dirichlet_faces.tolist())
    unknown = [int(f) for f in face_ids if int(f) not in dirichlet]
    if unknown:
        raise InvalidParameter(f"{path}: faces {unknown} are not Γ_D faces of the domain")
    values = frame.iloc[0].to_numpy(dtype=float)
    logger.debug(f"📥 Mesure lue: {path} ({face_ids.size} faces)")
    return Measurement(
        eigenvalue=float(values[0]),
        flux_trace=values[1:],
        face_ids=face_ids,
        face_weights=domain.face_measures[face_ids].copy(),
        p=float(p),
    )
