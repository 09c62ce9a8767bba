from typing import List, Sequence, Tuple

import numpy as np

from .._classical import BAND, covariance, doa_grid, music_map
from .._features import FrameSpectra
from .._geometry import SPEED_OF_SOUND, ArrayGeometry
from .base import EstimatorInterface, require_geometry


class MusicEstimator(EstimatorInterface):
    """
    Narrowband MUSIC in every band bin, with the pseudo-spectra averaged
    into one map.
    """

    algorithm = "music"

    def __init__(
        self,
        num_classes: int = 72,
        n_sources: int = 1,
        band: Tuple[float, float] = BAND,
        c: float = SPEED_OF_SOUND,
    ) -> None:
        self._grid = doa_grid(num_classes)
        self._n_sources = n_sources
        self._band = band
        self._c = c

    def handle_frames(
        self, frames: Sequence[FrameSpectra], geometry: ArrayGeometry
    ) -> List[np.ndarray]:
        geometry = require_geometry(self.algorithm, geometry)
        spectrum = music_map(
            covariance(frames),
            geometry,
            self._grid,
            n_sources=self._n_sources,
            band=self._band,
            c=self._c,
        )
        return [spectrum.values]
