from typing import List, Sequence, Tuple

import numpy as np

from .._classical import BAND, doa_grid, srp_phat_map
from .._features import FrameSpectra
from .._geometry import SPEED_OF_SOUND, ArrayGeometry
from .base import EstimatorInterface, require_geometry


class SrpPhatEstimator(EstimatorInterface):
    """
    Steered response power with phase transform weighting.

    One power map is computed over all frames of a signal.
    """

    algorithm = "srp-phat"

    def __init__(
        self,
        num_classes: int = 72,
        band: Tuple[float, float] = BAND,
        c: float = SPEED_OF_SOUND,
    ) -> None:
        self._grid = doa_grid(num_classes)
        self._band = band
        self._c = c

    def handle_frames(
        self, frames: Sequence[FrameSpectra], geometry: ArrayGeometry
    ) -> List[np.ndarray]:
        geometry = require_geometry(self.algorithm, geometry)
        power = srp_phat_map(frames, geometry, self._grid, band=self._band, c=self._c)
        return [power.values]
