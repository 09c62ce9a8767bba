from typing import List, Optional, Sequence, Union

import numpy as np

from .._estimation import DoaEstimate, frame_estimate
from .._exceptions import EstimationFailure, InvalidGeometry
from .._features import FrameSpectra, frame_signal
from .._geometry import ArrayGeometry
from .._room import MultichannelSignal
from .._trace import Trace


class EstimatorInterface:
    """
    A DoA estimator.

    Subclasses implement `handle_frames()`, returning one score vector over
    the DoA classes per usable frame. `estimate()` turns the scores into a
    `DoaEstimate`.
    """

    algorithm = "estimator"

    # Whether the estimator is given the array coordinates.
    uses_geometry = True

    def estimate(
        self,
        signal: MultichannelSignal,
        geometry: Optional[ArrayGeometry] = None,
        *,
        extensions: Optional[dict] = None,
    ) -> DoaEstimate:
        if not isinstance(signal, MultichannelSignal):
            raise TypeError(
                f"signal must be a MultichannelSignal, but got {type(signal).__name__}."
            )
        if geometry is not None and geometry.num_mics != signal.num_channels:
            raise InvalidGeometry(
                f"Geometry has {geometry.num_mics} mics, but the signal has {signal.num_channels} channels."
            )

        frames = frame_signal(signal)
        kwargs = {"frames": len(frames), "channels": signal.num_channels}
        with Trace(f"estimator.{self.algorithm}", extensions, kwargs) as trace:
            scores = self.handle_frames(frames, geometry)
            if not scores:
                raise EstimationFailure(f"{self.algorithm}: no usable frames.")
            per_frame = [frame_estimate(score) for score in scores]
            estimate = DoaEstimate(per_frame, algorithm=self.algorithm)
            trace.return_value = estimate
        return estimate

    def handle_frames(
        self, frames: Sequence[FrameSpectra], geometry: Union[ArrayGeometry, None]
    ) -> List[np.ndarray]:
        raise NotImplementedError()  # pragma: nocover

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.algorithm}]>"


def require_geometry(algorithm: str, geometry: Union[ArrayGeometry, None]) -> ArrayGeometry:
    if geometry is None:
        raise InvalidGeometry(f"{algorithm} requires the array geometry.")
    return geometry
