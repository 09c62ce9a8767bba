from pathlib import Path
from typing import Optional, Union

import numpy as np

from ._estimation import DoaEstimate
from ._exceptions import ConfigurationError
from ._features import FeatureKind
from ._geometry import SAMPLE_RATE, SPEED_OF_SOUND, ArrayGeometry
from ._mlp import MlpModel, load_model
from ._room import MultichannelSignal
from .estimators import EstimatorInterface, MusicEstimator, NeuralEstimator, SrpPhatEstimator

__all__ = ["estimate", "create_estimator"]

NEURAL_ALGORITHMS = {
    "fc-full": FeatureKind.FULL,
    "fc-max": FeatureKind.MAX,
    "fc-ga": FeatureKind.GEOMETRY_AWARE,
    "fc-full-ga": FeatureKind.FULL_GEOMETRY_AWARE,
}
ALGORITHMS = ("srp-phat", "music", *NEURAL_ALGORITHMS)


def create_estimator(
    algorithm: str,
    model: Optional[Union[MlpModel, str, Path]] = None,
    *,
    c: float = SPEED_OF_SOUND,
) -> EstimatorInterface:
    """
    Build the estimator for an algorithm name.

    Arguments:
        algorithm: One of `"srp-phat"`, `"music"`, `"fc-full"`, `"fc-max"`, `"fc-ga"` or `"fc-full-ga"`.
        model: The trained model of a neural algorithm, either loaded or as a path to a model file.
        c: The speed of sound in m/s, used by the model-based algorithms.
    """
    if algorithm == "srp-phat":
        return SrpPhatEstimator(c=c)
    if algorithm == "music":
        return MusicEstimator(c=c)
    if algorithm not in NEURAL_ALGORITHMS:
        raise ConfigurationError(
            f"Unknown algorithm {algorithm!r}. Expected one of {', '.join(ALGORITHMS)}."
        )

    if model is None:
        raise ConfigurationError(f"{algorithm} requires a trained model.")
    if not isinstance(model, MlpModel):
        model = load_model(model)
    kind = NEURAL_ALGORITHMS[algorithm]
    recorded = model.metadata.get("feature_kind")
    if recorded is not None and FeatureKind(recorded) is not kind:
        raise ConfigurationError(
            f"{algorithm} requires a {kind.value!r} model, but the model was trained on {recorded!r} features."
        )
    return NeuralEstimator(model, kind)


def estimate(
    signal: Union[MultichannelSignal, np.ndarray],
    geometry: Optional[ArrayGeometry] = None,
    *,
    algorithm: str = "srp-phat",
    model: Optional[Union[MlpModel, str, Path]] = None,
    fs: float = SAMPLE_RATE,
    extensions: Optional[dict] = None,
) -> DoaEstimate:
    """
    Estimates the direction of arrival of a single source.

    ```
    estimate = doacore.estimate(signal, doacore.arc_array(), algorithm="music")
    ```

    Arguments:
        signal: The microphone signals. Either as an instance of `doacore.MultichannelSignal`, or as an `(M, N)` array sampled at `fs`.
        geometry: The array geometry. Required by `"srp-phat"`, `"music"` and the geometry-aware neural algorithms, ignored by the others.
        algorithm: The estimation algorithm, as accepted by `create_estimator()`.
        model: The trained model of a neural algorithm.
        fs: The sample rate of an array `signal`.
        extensions: A dictionary of optional extras. Possible keys include `"trace"`.

    Returns:
        An instance of `doacore.DoaEstimate`.
    """
    if not isinstance(signal, MultichannelSignal):
        signal = MultichannelSignal(signal, fs)
    estimator = create_estimator(algorithm, model)
    if not estimator.uses_geometry:
        geometry = None
    return estimator.estimate(signal, geometry, extensions=extensions)
