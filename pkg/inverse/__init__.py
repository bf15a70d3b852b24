"""
Probin - Inverse Module
Mesures, reconstruction de h et sondes de stabilité
"""

from .measurement import Measurement, forward_measure
from .parameterization import BasisKind, RobinParameterization
from .reconstruction import NoiseModel, ReconstructionSettings, gauss_newton_reconstruct, jacobian
from .stability import compactness_probe, stability_probe, uniqueness_probe


__all__ = [
    'Measurement',
    'forward_measure',
    'BasisKind',
    'RobinParameterization',
    'NoiseModel',
    'ReconstructionSettings',
    'gauss_newton_reconstruct',
    'jacobian',
    'compactness_probe',
    'stability_probe',
    'uniqueness_probe',
]
