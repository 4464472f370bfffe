"""Learning superpositions of Airy disks below and above the diffraction limit."""

from .airy_core import (
    GAMMA_LOWER,
    GAMMA_UPPER,
    LANDAU_CONSTANT,
    airy_psf,
    bessel_j,
    otf,
    resolution_criteria,
)
from .errors import NumericalError
from .sampling import PhotonBatch, SuperpositionModel, sample

__version__ = "0.1.0"

__all__ = [
    "GAMMA_LOWER",
    "GAMMA_UPPER",
    "LANDAU_CONSTANT",
    "NumericalError",
    "PhotonBatch",
    "SuperpositionModel",
    "airy_psf",
    "bessel_j",
    "otf",
    "resolution_criteria",
    "sample",
]
