from .base import EstimatorInterface
from .mock import MockEstimator
from .music import MusicEstimator
from .neural import NeuralEstimator
from .srp import SrpPhatEstimator

__all__ = [
    "EstimatorInterface",
    "MockEstimator",
    "MusicEstimator",
    "NeuralEstimator",
    "SrpPhatEstimator",
]
