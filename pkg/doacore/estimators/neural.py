import logging
from typing import List, Optional, Sequence, Union

import numpy as np

from .._exceptions import ModelLoadError
from .._features import FeatureKind, FrameSpectra, assemble_feature, gcc_phat_matrix
from .._geometry import DEFAULT_ETA, SAMPLE_RATE, SPEED_OF_SOUND, ArrayGeometry, LagBound, lag_bound
from .._mlp import MlpModel, predict_proba
from .base import EstimatorInterface, require_geometry

logger = logging.getLogger("doacore.estimators")


class NeuralEstimator(EstimatorInterface):
    """
    A trained classifier over per-frame GCC-PHAT features.

    The feature kind and the lag bound the model was trained with are read
    from the model metadata. Geometry-aware max-lag features bound the lags
    by the geometry they are given. Every other kind keeps the trained lag
    bound, since it fixes the feature length.

    Parameters:
        model: A model produced by `doacore.train()` or `doacore.load_model()`.
        kind: The feature kind, when the model metadata does not record it.
    """

    def __init__(
        self,
        model: MlpModel,
        kind: Optional[Union[FeatureKind, str]] = None,
        fs: Optional[float] = None,
        c: Optional[float] = None,
        eta: Optional[int] = None,
    ) -> None:
        metadata = model.metadata
        if kind is None:
            if "feature_kind" not in metadata:
                raise ModelLoadError("Model metadata does not record its feature kind.")
            kind = metadata["feature_kind"]
        self._model = model
        self._kind = FeatureKind(kind)
        self._fs = metadata.get("fs", SAMPLE_RATE) if fs is None else fs
        self._c = metadata.get("c", SPEED_OF_SOUND) if c is None else c
        self._eta = metadata.get("eta", DEFAULT_ETA) if eta is None else eta
        self._tau_max = metadata.get("tau_max")

    @property
    def kind(self) -> FeatureKind:
        return self._kind

    @property
    def algorithm(self) -> str:  # type: ignore[override]
        return {
            FeatureKind.FULL: "fc-full",
            FeatureKind.MAX: "fc-max",
            FeatureKind.GEOMETRY_AWARE: "fc-ga",
            FeatureKind.FULL_GEOMETRY_AWARE: "fc-full-ga",
        }[self._kind]

    @property
    def uses_geometry(self) -> bool:  # type: ignore[override]
        return self._kind.geometry_aware

    def _bound(self, geometry: Union[ArrayGeometry, None]) -> LagBound:
        if self._kind is FeatureKind.GEOMETRY_AWARE:
            return lag_bound(geometry, fs=self._fs, c=self._c, eta=self._eta)
        if self._tau_max is None:
            raise ModelLoadError("Model metadata does not record its lag bound.")
        return LagBound(self._tau_max, eta=self._eta, fs=self._fs, c=self._c)

    def handle_frames(
        self, frames: Sequence[FrameSpectra], geometry: Union[ArrayGeometry, None]
    ) -> List[np.ndarray]:
        if self._kind.geometry_aware:
            geometry = require_geometry(self.algorithm, geometry)
        else:
            geometry = None
        bound = self._bound(geometry)

        features = []
        for frame in frames:
            g = gcc_phat_matrix(frame, bound)
            if g.silent:
                logger.debug("%s skipped silent frame %d", self.algorithm, frame.index)
                continue
            feature = assemble_feature(
                self._kind, g, geometry, expected_size=self._model.input_size
            )
            features.append(feature.values)
        if not features:
            return []
        return list(predict_proba(self._model, np.stack(features)))
