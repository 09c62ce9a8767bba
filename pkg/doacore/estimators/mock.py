from typing import List, Sequence, Union

import numpy as np

from .._features import FrameSpectra
from .._geometry import ArrayGeometry
from .base import EstimatorInterface


class MockEstimator(EstimatorInterface):
    """
    Returns scripted class scores, one vector per frame, regardless of the signal.
    """

    algorithm = "mock"
    uses_geometry = False

    def __init__(self, scores: Sequence[Sequence[float]]) -> None:
        self._scores = [np.asarray(score, dtype=np.float64) for score in scores]

    def handle_frames(
        self, frames: Sequence[FrameSpectra], geometry: Union[ArrayGeometry, None]
    ) -> List[np.ndarray]:
        return list(self._scores[: len(frames)])
