import csv
import enum
import logging
import math
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import windows

from ._exceptions import (
    EmptyInput,
    FeatureShapeError,
    NumericError,
    SampleRateMismatch,
    SilentFrame,
)
from ._geometry import ArrayGeometry, LagBound, pair_indices
from ._room import MultichannelSignal
from ._trace import Trace

__all__ = [
    "FeatureKind",
    "FrameSpectra",
    "GccPhatMatrix",
    "FeatureVector",
    "frame_signal",
    "check_sample_rate",
    "gcc_phat",
    "gcc_phat_matrix",
    "parabolic_peak",
    "max_lag_features",
    "assemble_feature",
    "feature_size",
    "extract_features",
    "write_features_csv",
]

logger = logging.getLogger("doacore.features")

FRAME_SIZE = 256
MAGNITUDE_FLOOR = 1e-12


class FeatureKind(enum.Enum):
    """
    The per-frame feature vectors a neural estimator can consume.

    * `FULL` - every pair's GCC-PHAT over the constrained lags.
    * `MAX` - every pair's interpolated GCC-PHAT peak location.
    * `GEOMETRY_AWARE` - the `MAX` feature followed by the microphone coordinates.
    * `FULL_GEOMETRY_AWARE` - the `FULL` feature followed by the microphone coordinates.
    """

    FULL = "full"
    MAX = "max"
    GEOMETRY_AWARE = "geometry-aware"
    FULL_GEOMETRY_AWARE = "full-geometry-aware"

    @property
    def geometry_aware(self) -> bool:
        return self in (FeatureKind.GEOMETRY_AWARE, FeatureKind.FULL_GEOMETRY_AWARE)

    @property
    def uses_full_gcc(self) -> bool:
        return self in (FeatureKind.FULL, FeatureKind.FULL_GEOMETRY_AWARE)


class FrameSpectra:
    """
    The Hann-windowed samples and one-sided spectra of a single frame, for every channel.
    """

    def __init__(
        self, frames: np.ndarray, spectra: np.ndarray, fs: float, index: int = 0
    ) -> None:
        self.frames = frames
        self.spectra = spectra
        self.fs = float(fs)
        self.index = index

    @property
    def num_channels(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_size(self) -> int:
        return self.frames.shape[1]

    @property
    def frequencies(self) -> np.ndarray:
        return np.fft.rfftfreq(self.frame_size, d=1.0 / self.fs)

    @property
    def is_silent(self) -> bool:
        return not np.any(self.frames)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [frame {self.index}, {self.num_channels} channels]>"


class GccPhatMatrix:
    """
    GCC-PHAT vectors of every microphone pair, shape `(P, 2 * tau_max)`.

    Column `j` holds lag `j - tau_max`. A frame that is all zeros yields a
    matrix of zeros with `silent` set.
    """

    def __init__(
        self,
        values: np.ndarray,
        pairs: Sequence[Tuple[int, int]],
        bound: LagBound,
        silent: bool = False,
        frame_index: int = 0,
    ) -> None:
        if values.shape != (len(pairs), bound.width):
            raise FeatureShapeError(
                f"Expected GCC-PHAT values of shape {(len(pairs), bound.width)}, but got {values.shape}."
            )
        self.values = values
        self.pairs = list(pairs)
        self.bound = bound
        self.silent = silent
        self.frame_index = frame_index

    @property
    def num_pairs(self) -> int:
        return len(self.pairs)

    def lag_vector(self, pair: Tuple[int, int]) -> np.ndarray:
        return self.values[self.pairs.index(pair)]

    def __repr__(self) -> str:
        silent = ", silent" if self.silent else ""
        return f"<{self.__class__.__name__} [{self.num_pairs} pairs, tau_max={self.bound.tau_max}{silent}]>"


class FeatureVector:
    def __init__(self, kind: FeatureKind, values: np.ndarray, frame_index: int = 0) -> None:
        self.kind = FeatureKind(kind)
        self.values = np.asarray(values, dtype=np.float64)
        self.values.flags.writeable = False
        self.frame_index = frame_index

    def __len__(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.kind.value}, {len(self)} values, frame {self.frame_index}]>"


def frame_signal(
    signal: MultichannelSignal, frame_size: int = FRAME_SIZE
) -> List[FrameSpectra]:
    """
    Split a signal into non-overlapping Hann-windowed frames.

    The trailing partial frame is dropped. The window is the symmetric Hann
    window, `0.5 * (1 - cos(2 pi n / (N - 1)))`.
    """
    num_frames = signal.num_samples // frame_size
    if num_frames == 0:
        raise EmptyInput(
            f"Signal of {signal.num_samples} samples is shorter than one {frame_size} sample frame."
        )
    window = windows.hann(frame_size, sym=True)
    blocks = signal.channels[:, : num_frames * frame_size]
    blocks = blocks.reshape(signal.num_channels, num_frames, frame_size).transpose(1, 0, 2)
    blocks = blocks * window
    spectra = np.fft.rfft(blocks, axis=-1)
    return [
        FrameSpectra(blocks[index], spectra[index], signal.fs, index)
        for index in range(num_frames)
    ]


def check_sample_rate(fs: float, bound: LagBound) -> None:
    """
    Raise `SampleRateMismatch` unless `fs` is the rate `bound` was computed for.
    """
    if not math.isclose(fs, bound.fs):
        raise SampleRateMismatch(
            f"Signal sampled at {fs:g} Hz, but the lag bound assumes {bound.fs:g} Hz."
        )


def _phat(cross: np.ndarray) -> np.ndarray:
    magnitude = np.abs(cross)
    weighted = np.zeros_like(cross)
    np.divide(cross, magnitude, out=weighted, where=magnitude > MAGNITUDE_FLOOR)
    return weighted


def _constrain(correlation: np.ndarray, bound: LagBound) -> np.ndarray:
    tau = bound.tau_max
    if 2 * tau > correlation.shape[-1]:
        raise FeatureShapeError(
            f"tau_max={tau} does not fit a {correlation.shape[-1]} sample frame."
        )
    return np.concatenate([correlation[..., -tau:], correlation[..., :tau]], axis=-1)


def gcc_phat(frame: FrameSpectra, pair: Tuple[int, int], bound: LagBound) -> np.ndarray:
    """
    The GCC-PHAT of one microphone pair over lags `[-tau_max, tau_max - 1]`.

    A positive lag means channel `k` leads channel `l`: when channel `l` is
    channel `k` delayed by `d` samples, the peak sits at lag `+d`.
    """
    check_sample_rate(frame.fs, bound)
    k, l = pair
    cross = np.conj(frame.spectra[k]) * frame.spectra[l]
    correlation = np.fft.irfft(_phat(cross), n=frame.frame_size)
    return _constrain(correlation, bound)


def gcc_phat_matrix(
    frame: FrameSpectra,
    bound: LagBound,
    pairs: Optional[Sequence[Tuple[int, int]]] = None,
) -> GccPhatMatrix:
    check_sample_rate(frame.fs, bound)
    if pairs is None:
        pairs = pair_indices(frame.num_channels)
    first = np.array([k for k, _ in pairs])
    second = np.array([l for _, l in pairs])
    cross = np.conj(frame.spectra[first]) * frame.spectra[second]
    correlation = np.fft.irfft(_phat(cross), n=frame.frame_size, axis=-1)
    return GccPhatMatrix(
        _constrain(correlation, bound),
        pairs,
        bound,
        silent=frame.is_silent,
        frame_index=frame.index,
    )


def parabolic_peak(y_minus: float, y_0: float, y_plus: float) -> float:
    """
    The vertex offset of the parabola through `(-1, y_minus)`, `(0, y_0)` and `(1, y_plus)`.
    """
    if not (np.isfinite(y_minus) and np.isfinite(y_0) and np.isfinite(y_plus)):
        raise NumericError(f"Cannot interpolate non-finite values ({y_minus}, {y_0}, {y_plus}).")
    denominator = y_minus - 2 * y_0 + y_plus
    if abs(denominator) < 1e-12:
        return 0.0
    return 0.5 * (y_minus - y_plus) / denominator


def max_lag_features(g: GccPhatMatrix) -> np.ndarray:
    """
    The interpolated peak lag of every pair, in samples.

    Ties go to the smallest lag. A peak at either end of the lag window is
    not interpolated.
    """
    if g.silent:
        raise SilentFrame(f"Frame {g.frame_index} is silent.")
    lags = g.bound.lags
    peaks = np.argmax(g.values, axis=1)
    delays = np.empty(g.num_pairs)
    for row, peak in enumerate(peaks):
        offset = 0.0
        if 0 < peak < g.bound.width - 1:
            values = g.values[row]
            offset = parabolic_peak(values[peak - 1], values[peak], values[peak + 1])
        delays[row] = lags[peak] + offset
    return delays


def feature_size(kind: Union[FeatureKind, str], num_mics: int, tau_max: int) -> int:
    """
    The closed-form feature length for `num_mics` microphones and lag bound `tau_max`.
    """
    kind = FeatureKind(kind)
    num_pairs = num_mics * (num_mics - 1) // 2
    size = num_pairs * 2 * tau_max if kind.uses_full_gcc else num_pairs
    if kind.geometry_aware:
        size += 2 * num_mics
    return size


def assemble_feature(
    kind: Union[FeatureKind, str],
    g: GccPhatMatrix,
    geometry: Optional[ArrayGeometry] = None,
    expected_size: Optional[int] = None,
) -> FeatureVector:
    """
    Build the feature vector of one frame.

    GCC-PHAT values are concatenated pair by pair. Geometry-aware kinds append
    the centroid-relative x coordinates, then the y coordinates.
    """
    kind = FeatureKind(kind)
    if kind.geometry_aware and geometry is None:
        raise ValueError(f"{kind.value!r} features require the array geometry.")
    if g.silent:
        raise SilentFrame(f"Frame {g.frame_index} is silent.")

    if kind.uses_full_gcc:
        parts = [g.values.reshape(-1)]
    else:
        parts = [max_lag_features(g)]
    if kind.geometry_aware:
        if geometry.num_mics * (geometry.num_mics - 1) // 2 != g.num_pairs:
            raise FeatureShapeError(
                f"Geometry of {geometry.num_mics} mics does not match {g.num_pairs} pairs."
            )
        centered = geometry.centered()
        parts += [centered[:, 0], centered[:, 1]]

    values = np.concatenate(parts)
    if expected_size is not None and len(values) != expected_size:
        raise FeatureShapeError(
            f"{kind.value!r} feature has {len(values)} values, but {expected_size} are expected."
        )
    return FeatureVector(kind, values, g.frame_index)


def extract_features(
    signal: MultichannelSignal,
    kind: Union[FeatureKind, str],
    bound: LagBound,
    geometry: Optional[ArrayGeometry] = None,
    extensions: Optional[dict] = None,
) -> List[FeatureVector]:
    """
    Featurize every frame of a signal, skipping silent frames.
    """
    check_sample_rate(signal.fs, bound)
    kind = FeatureKind(kind)
    kwargs = {"kind": kind.value, "tau_max": bound.tau_max}
    with Trace("features.extract", extensions, kwargs) as trace:
        features = []
        for frame in frame_signal(signal):
            g = gcc_phat_matrix(frame, bound)
            if g.silent:
                logger.debug("Skipping silent frame %d", frame.index)
                continue
            features.append(assemble_feature(kind, g, geometry))
        trace.return_value = len(features)
    return features


def write_features_csv(path: Union[str, Path], features: Iterable[FeatureVector]) -> None:
    """
    Write one row per frame: `frame_index, kind, values...`.
    """
    with open(path, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream)
        for feature in features:
            writer.writerow([feature.frame_index, feature.kind.value, *map(repr, feature.values.tolist())])
