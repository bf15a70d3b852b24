"""
Statistical Fits
================
Ajustements en échelle log-log (ordres de convergence, exposants de
stabilité) et tests de monotonie sur des suites de mesures.
"""

from dataclasses import dataclass
from typing import Dict

import numpy as np
from scipy import stats as scipy_stats

from core.errors import InsufficientData


@dataclass
class LogLogFit:
    """Ajustement log y = intercept + slope · log x."""
    slope: float
    intercept: float
    r_squared: float
    n_points: int

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope

    def to_dict(self) -> Dict:
        return {
            'slope': round(self.slope, 6),
            'intercept': round(self.intercept, 6),
            'r_squared': round(self.r_squared, 6),
            'n_points': self.n_points,
        }


def loglog_fit(x: np.ndarray, y: np.ndarray) -> LogLogFit:
    """Régression linéaire de log y sur log x (points strictement positifs)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    if keep.sum() < 2:
        raise InsufficientData(f"Log-log fit needs at least 2 positive points (got {int(keep.sum())})")
    if np.unique(x[keep]).size < 2:
        raise InsufficientData("Log-log fit needs at least 2 distinct abscissae")
    result = scipy_stats.linregress(np.log(x[keep]), np.log(y[keep]))
    return LogLogFit(
        slope=float(result.slope),
        intercept=float(result.intercept),
        r_squared=float(result.rvalue ** 2),
        n_points=int(keep.sum()),
    )


def is_monotone(values: np.ndarray, decreasing: bool = True, strict: bool = True) -> bool:
    diffs = np.diff(np.asarray(values, dtype=float))
    if decreasing:
        diffs = -diffs
    return bool(np.all(diffs > 0) if strict else np.all(diffs >= 0))
