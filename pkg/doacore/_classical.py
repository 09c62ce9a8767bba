import csv
import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ._exceptions import EmptyInput, EstimationFailure, NumericError
from ._features import MAGNITUDE_FLOOR, FrameSpectra
from ._geometry import SPEED_OF_SOUND, ArrayGeometry, arrival_delays
from ._linalg import eigh

__all__ = [
    "PowerMap",
    "CovarianceSet",
    "doa_grid",
    "band_bins",
    "steering_vectors",
    "srp_phat_map",
    "covariance",
    "music_map",
]

logger = logging.getLogger("doacore.classical")

# Speech band used by both model-based algorithms.
BAND = (300.0, 3400.0)
NUM_CLASSES = 72


def doa_grid(num_classes: int = NUM_CLASSES) -> np.ndarray:
    """
    Candidate DoAs `0, 360/C, ..., 360 - 360/C` degrees.
    """
    return np.arange(num_classes) * (360.0 / num_classes)


def band_bins(frequencies: np.ndarray, band: Tuple[float, float] = BAND) -> np.ndarray:
    low, high = band
    bins = np.nonzero((frequencies >= low) & (frequencies <= high))[0]
    if len(bins) == 0:
        raise EmptyInput(f"No frequency bins within {low:g}-{high:g} Hz.")
    return bins


def steering_vectors(
    geometry: ArrayGeometry,
    frequencies: np.ndarray,
    grid: np.ndarray,
    c: float = SPEED_OF_SOUND,
) -> np.ndarray:
    """
    Far-field steering vectors `exp(-j w t_m(theta))`, shape `(K, C, M)`,
    with arrival times taken relative to the array centroid.
    """
    delays = arrival_delays(geometry, grid, c)
    omega = 2 * np.pi * np.asarray(frequencies)
    return np.exp(-1j * omega[:, None, None] * delays[None, :, :])


class PowerMap:
    """
    Power over the candidate DoA grid, as computed by a model-based algorithm.
    """

    def __init__(
        self, values: np.ndarray, algorithm: str, grid: Optional[np.ndarray] = None
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        grid = doa_grid(len(values)) if grid is None else np.asarray(grid, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"{len(values)} values do not match a grid of {len(grid)} DoAs.")
        if not np.all(np.isfinite(values)):
            raise NumericError(f"{algorithm} power map has non-finite values.")
        self.values = values
        self.algorithm = algorithm
        self.grid = grid

    @property
    def peak(self) -> float:
        return float(self.grid[int(np.argmax(self.values))])

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as stream:
            writer = csv.writer(stream)
            writer.writerow(["theta_degrees", "value"])
            for theta, value in zip(self.grid.tolist(), self.values.tolist()):
                writer.writerow([repr(theta), repr(value)])

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.algorithm}, peak={self.peak:g}]>"


class CovarianceSet:
    """
    Per-bin spatial covariance matrices, shape `(K, M, M)`, averaged over frames.
    """

    def __init__(self, matrices: np.ndarray, frequencies: np.ndarray, num_frames: int) -> None:
        self.matrices = matrices
        self.frequencies = frequencies
        self.num_frames = num_frames

    @property
    def num_channels(self) -> int:
        return self.matrices.shape[1]

    def __repr__(self) -> str:
        return (
            f"<{self.__class__.__name__} [{len(self.frequencies)} bins, "
            f"{self.num_channels} channels, {self.num_frames} frames]>"
        )


def _active_spectra(frames: Sequence[FrameSpectra], algorithm: str) -> np.ndarray:
    active = [frame.spectra for frame in frames if not frame.is_silent]
    if len(active) < len(frames):
        logger.debug("%s skipped %d silent frames", algorithm, len(frames) - len(active))
    if not active:
        raise EstimationFailure(f"{algorithm}: every frame is silent.")
    return np.stack(active)


def srp_phat_map(
    frames: Sequence[FrameSpectra],
    geometry: ArrayGeometry,
    grid: Optional[np.ndarray] = None,
    band: Tuple[float, float] = BAND,
    c: float = SPEED_OF_SOUND,
) -> PowerMap:
    """
    The SRP-PHAT power map, averaged over frames.

    Summing the PHAT-weighted cross-spectra of every ordered pair, steered by
    the pair delays, equals the delay-and-sum power of the whitened channel
    spectra. The map is computed in that form.
    """
    if not frames:
        raise EmptyInput("SRP-PHAT requires at least one frame.")
    grid = doa_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    spectra = _active_spectra(frames, "srp-phat")
    bins = band_bins(frames[0].frequencies, band)
    selected = spectra[:, :, bins]

    magnitude = np.abs(selected)
    whitened = np.zeros_like(selected)
    np.divide(selected, magnitude, out=whitened, where=magnitude > MAGNITUDE_FLOOR)

    steering = steering_vectors(geometry, frames[0].frequencies[bins], grid, c)
    beams = np.einsum("kcm,fmk->fkc", np.conj(steering), whitened)
    power = np.sum(np.abs(beams) ** 2, axis=1)
    return PowerMap(power.mean(axis=0), "srp-phat", grid)


def covariance(frames: Sequence[FrameSpectra]) -> CovarianceSet:
    """
    Sample covariance `(1/F) sum_f Y(w) Y(w)^H` of every frequency bin.

    Silent frames are skipped.
    """
    if not frames:
        raise EmptyInput("Covariance requires at least one frame.")
    spectra = _active_spectra(frames, "covariance")
    num_frames, num_channels, _ = spectra.shape
    if num_frames < num_channels:
        logger.warning(
            "Covariance from %d frames is rank deficient for %d channels",
            num_frames,
            num_channels,
        )
    matrices = np.einsum("fmk,fnk->kmn", spectra, np.conj(spectra)) / num_frames
    return CovarianceSet(matrices, frames[0].frequencies, num_frames)


def music_map(
    cov: CovarianceSet,
    geometry: ArrayGeometry,
    grid: Optional[np.ndarray] = None,
    n_sources: int = 1,
    band: Tuple[float, float] = BAND,
    c: float = SPEED_OF_SOUND,
) -> PowerMap:
    """
    The MUSIC pseudo-spectrum `1 / ||E_N^H a(theta)||^2`, averaged over the band bins.
    """
    num_channels = cov.num_channels
    if num_channels != geometry.num_mics:
        raise ValueError(
            f"Covariance has {num_channels} channels, but the geometry has {geometry.num_mics} mics."
        )
    if not 0 < n_sources < num_channels:
        raise ValueError(f"n_sources must be within [1, {num_channels - 1}], but got {n_sources}.")
    grid = doa_grid() if grid is None else np.asarray(grid, dtype=np.float64)

    bins = band_bins(cov.frequencies, band)
    _, vectors = eigh(cov.matrices[bins])
    noise = vectors[:, :, : num_channels - n_sources]

    steering = steering_vectors(geometry, cov.frequencies[bins], grid, c)
    projection = np.einsum("kmn,kcm->kcn", np.conj(noise), steering)
    distance = np.sum(np.abs(projection) ** 2, axis=-1)
    spectrum = 1.0 / np.maximum(distance, 1e-12 * num_channels)
    return PowerMap(spectrum.mean(axis=0), "music", grid)
