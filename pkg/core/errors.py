"""
Erreurs du laboratoire
======================
Hiérarchie d'exceptions partagée par tous les modules. Chaque classe porte un
``code`` lisible par machine, recopié tel quel dans le manifeste de run.
"""

from typing import Any, Optional


class ProbinError(Exception):
    """Erreur de base du laboratoire."""

    code = "PROBIN_ERROR"

    def to_dict(self) -> dict:
        return {'code': self.code, 'message': str(self)}


class InvalidMesh(ProbinError):
    """Maillage non conforme, dégénéré ou mal étiqueté."""
    code = "INVALID_MESH"


class InvalidParameter(ProbinError):
    """Paramètre hors de son domaine de validité."""
    code = "INVALID_PARAMETER"


class MeshFoldover(ProbinError):
    """L'extrusion de la couche de revêtement se replie (aire négative)."""
    code = "MESH_FOLDOVER"


class ConstraintViolation(ProbinError):
    """Vecteur nodal non nul sur Γ_D."""
    code = "CONSTRAINT_VIOLATION"


class DegenerateInput(ProbinError):
    """Entrée identiquement nulle là où une normalisation est requise."""
    code = "DEGENERATE_INPUT"


class UnsupportedProblem(ProbinError):
    """Problème hors du cadre (par exemple Γ_D vide)."""
    code = "UNSUPPORTED_PROBLEM"


class UnsupportedExponent(ProbinError):
    """Exposant p non couvert (la sensibilité exige p ≥ 2)."""
    code = "UNSUPPORTED_EXPONENT"


class LinearizationNotInvertible(ProbinError):
    """Système linéarisé augmenté singulier."""
    code = "LINEARIZATION_NOT_INVERTIBLE"


class InsufficientData(ProbinError):
    """Pas assez de couples valides pour un ajustement."""
    code = "INSUFFICIENT_DATA"


class ConfigError(ProbinError):
    """Configuration invalide (clé inconnue, valeur hors bornes, fichier absent)."""
    code = "CONFIG_ERROR"


class NoConvergence(ProbinError):
    """
    Le solveur n'a pas convergé.

    Le meilleur itéré est conservé dans ``best`` pour diagnostic.
    """
    code = "NO_CONVERGENCE"

    def __init__(self, message: str, best: Optional[Any] = None):
        super().__init__(message)
        self.best = best


class NoDescentDirection(ProbinError):
    """Gauss-Newton ne trouve plus de direction de descente."""
    code = "NO_DESCENT_DIRECTION"

    def __init__(self, message: str, best: Optional[Any] = None):
        super().__init__(message)
        self.best = best
