from pathlib import Path
from typing import Tuple, Union

import numpy as np
import soundfile as sf

from ._exceptions import IngestionError, map_exceptions

__all__ = ["read_wav", "read_multichannel_wav", "write_wav"]


def _read_pcm16(path: Union[str, Path]) -> Tuple[np.ndarray, float]:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"WAV file not found: {path}")

    with map_exceptions({RuntimeError: IngestionError}):
        info = sf.info(str(path))
        if info.subtype != "PCM_16":
            raise IngestionError(f"{path}: expected 16-bit PCM, but got {info.subtype}.")
        samples, rate = sf.read(str(path), dtype="float64", always_2d=True)
    return samples, float(rate)


def _resample(samples: np.ndarray, rate: float, fs: float) -> np.ndarray:
    """
    Linear interpolation along the first axis. There is no anti-aliasing
    filter, so downsampling folds energy above the new Nyquist frequency
    back into the band.
    """
    if rate == fs or len(samples) == 0:
        return samples
    source_times = np.arange(len(samples)) / rate
    times = np.arange(int(np.floor(len(samples) / rate * fs))) / fs
    return np.stack(
        [np.interp(times, source_times, channel) for channel in samples.T], axis=-1
    )


def read_wav(path: Union[str, Path], fs: float = 8000) -> np.ndarray:
    """
    Read a 16-bit PCM mono WAV file, resampled to `fs`.
    """
    samples, rate = _read_pcm16(path)
    if samples.shape[1] != 1:
        raise IngestionError(f"{path}: expected a mono file, but got {samples.shape[1]} channels.")
    return _resample(samples, rate, fs)[:, 0]


def read_multichannel_wav(path: Union[str, Path], fs: float = 8000) -> np.ndarray:
    """
    Read a 16-bit PCM WAV recording as an `(M, N)` array, resampled to `fs`.
    """
    samples, rate = _read_pcm16(path)
    return _resample(samples, rate, fs).T


def write_wav(path: Union[str, Path], channels: np.ndarray, fs: float) -> None:
    """
    Write an `(M, N)` signal as an M-channel 16-bit PCM WAV file.

    The signal is scaled so that its peak sits just below full scale.
    """
    channels = np.atleast_2d(np.asarray(channels, dtype=np.float64))
    peak = np.max(np.abs(channels)) if channels.size else 0.0
    if peak > 0:
        channels = channels * (0.99 / peak)
    sf.write(str(path), channels.T, int(fs), subtype="PCM_16")
