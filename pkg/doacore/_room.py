import enum
import logging
import math
from pathlib import Path
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import fftconvolve, resample_poly

from ._exceptions import (
    DegenerateScene,
    IngestionError,
    InvalidScene,
    NumericError,
    SceneSamplingError,
    SchemaMismatch,
)
from ._geometry import SAMPLE_RATE, SPEED_OF_SOUND, ArrayGeometry, arrival_delays
from ._wav import read_wav

__all__ = [
    "SourceKind",
    "RoomSpec",
    "Scene",
    "SceneRanges",
    "MultichannelSignal",
    "sample_scene",
    "simulate_rir",
    "simulate_rirs",
    "measure_t60",
    "render_scene",
    "render_components",
    "render_plane_wave",
    "diffuse_babble",
    "speech_shaped_noise",
    "synthetic_speech",
]

logger = logging.getLogger("doacore.room")

SCENE_SCHEMA = "doacore.scene/1"
FRAME_SIZE = 256

# Sabine's constant, in seconds per meter.
SABINE = 0.1611

# Image delays are placed on a grid this many times finer than the sample rate.
OVERSAMPLING = 16


class SourceKind(enum.Enum):
    SPEECH_WAV = "speech-wav"
    WHITE_NOISE = "white-noise"
    SYNTHETIC_SPEECH = "synthetic-speech"


def enforce_vector(value: Any, *, size: int, name: str) -> np.ndarray:
    vector = np.array(value, dtype=np.float64).reshape(-1)
    if vector.shape != (size,) or not np.all(np.isfinite(vector)):
        raise InvalidScene(f"{name} must be {size} finite values, but got {value!r}.")
    return vector


class RoomSpec:
    """
    A shoebox room with uniform wall absorption.

    The reflection coefficient of every surface is derived from `t60` with
    Sabine's formula, unless `reflection` is given explicitly. A reflection
    coefficient of 0 simulates free-field conditions.
    """

    def __init__(
        self,
        dims: Sequence[float],
        t60: float,
        fs: float = SAMPLE_RATE,
        c: float = SPEED_OF_SOUND,
        reflection: Optional[float] = None,
    ) -> None:
        self.dims = enforce_vector(dims, size=3, name="dims")
        if np.any(self.dims <= 0):
            raise InvalidScene(f"Room dimensions must be positive, but got {self.dims.tolist()}.")
        if not 0.05 <= t60 <= 2.0:
            raise InvalidScene(f"t60 must be within [0.05, 2.0] s, but got {t60}.")
        if fs <= 0 or c <= 0:
            raise InvalidScene("fs and c must be positive.")
        if reflection is not None and not 0.0 <= reflection < 1.0:
            raise InvalidScene(f"reflection must be within [0, 1), but got {reflection}.")
        self.t60 = float(t60)
        self.fs = float(fs)
        self.c = float(c)
        self.reflection = None if reflection is None else float(reflection)

    @property
    def volume(self) -> float:
        return float(np.prod(self.dims))

    @property
    def surface(self) -> float:
        lx, ly, lz = self.dims
        return float(2 * (lx * ly + lx * lz + ly * lz))

    @property
    def absorption(self) -> float:
        alpha = SABINE * self.volume / (self.surface * self.t60)
        return float(np.clip(alpha, 1e-6, 1.0 - 1e-6))

    @property
    def reflection_coefficient(self) -> float:
        if self.reflection is not None:
            return self.reflection
        return math.sqrt(1.0 - self.absorption)

    def contains(self, points: np.ndarray, margin: float = 0.0) -> bool:
        """
        Return `True` if every point lies strictly inside the room, at least
        `margin` meters away from each wall.
        """
        points = np.atleast_2d(points)
        return bool(np.all(points > margin) and np.all(points < self.dims - margin))

    def to_record(self) -> dict:
        return {
            "dims": self.dims.tolist(),
            "t60": self.t60,
            "fs": self.fs,
            "c": self.c,
            "reflection": self.reflection,
        }

    def __repr__(self) -> str:
        dims = ", ".join(f"{value:.2f}" for value in self.dims)
        return f"<{self.__class__.__name__} [{dims}] m, T60={self.t60:.2f} s>"


class MultichannelSignal:
    """
    Time-aligned microphone signals, as an `(M, N)` array sampled at `fs`.
    """

    def __init__(self, channels: np.ndarray, fs: float) -> None:
        channels = np.array(channels, dtype=np.float64)
        if channels.ndim != 2:
            raise ValueError(f"channels must have shape (M, N), but got {channels.shape}.")
        self.channels = channels
        self.fs = float(fs)

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def num_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.fs

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.num_channels} x {self.num_samples} @ {self.fs:g} Hz]>"


class Scene:
    """
    One simulated trial: a room, an array placed at `array_center`, a single
    static source, and the SNR of the additive babble.

    The ground-truth DoA is the azimuth of the source seen from the array
    center. The array geometry is placed centroid-first at the array center,
    in the horizontal plane at the array height.
    """

    def __init__(
        self,
        room: RoomSpec,
        array_center: Sequence[float],
        geometry: ArrayGeometry,
        source_position: Sequence[float],
        source_kind: Union[SourceKind, str] = SourceKind.WHITE_NOISE,
        snr_db: float = math.inf,
        source_path: Optional[Union[str, Path]] = None,
        seed: Optional[int] = None,
    ) -> None:
        self.room = room
        self.array_center = enforce_vector(array_center, size=3, name="array_center")
        self.geometry = geometry
        self.source_position = enforce_vector(source_position, size=3, name="source_position")
        self.source_kind = SourceKind(source_kind)
        self.snr_db = float(snr_db)
        self.source_path = None if source_path is None else str(source_path)
        self.seed = seed

        if self.source_kind is SourceKind.SPEECH_WAV and self.source_path is None:
            raise InvalidScene("A speech-wav scene requires a source_path.")
        if not room.contains(self.source_position):
            raise InvalidScene("The source lies outside the room.")
        if not room.contains(self.mic_positions):
            raise InvalidScene("A microphone lies outside the room.")
        offset = self.source_position[:2] - self.array_center[:2]
        if not np.any(offset):
            raise InvalidScene("The source coincides with the array center.")

        azimuth = math.degrees(math.atan2(offset[1], offset[0])) % 360.0
        self.ground_truth_doa = round(azimuth, 9) % 360.0

    @property
    def mic_positions(self) -> np.ndarray:
        """
        The microphone positions in room coordinates, shape `(M, 3)`.
        """
        planar = self.array_center[:2] + self.geometry.centered()
        height = np.full((self.geometry.num_mics, 1), self.array_center[2])
        return np.hstack([planar, height])

    @property
    def source_distance(self) -> float:
        return float(np.linalg.norm(self.source_position - self.array_center))

    def with_geometry(self, geometry: ArrayGeometry) -> "Scene":
        """
        The same scene, recorded by a different array at the same center.
        """
        return Scene(
            room=self.room,
            array_center=self.array_center,
            geometry=geometry,
            source_position=self.source_position,
            source_kind=self.source_kind,
            snr_db=self.snr_db,
            source_path=self.source_path,
            seed=self.seed,
        )

    def to_record(self) -> dict:
        return {
            "schema": SCENE_SCHEMA,
            "room": self.room.to_record(),
            "array_center": self.array_center.tolist(),
            "geometry": self.geometry.mics.tolist(),
            "source_position": self.source_position.tolist(),
            "source_kind": self.source_kind.value,
            "source_path": self.source_path,
            "snr_db": None if math.isinf(self.snr_db) else self.snr_db,
            "ground_truth_doa": self.ground_truth_doa,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Scene":
        if record.get("schema") != SCENE_SCHEMA:
            raise SchemaMismatch(
                f"Expected scene schema {SCENE_SCHEMA!r}, but got {record.get('schema')!r}."
            )
        room = RoomSpec(**record["room"])
        snr_db = record["snr_db"]
        return cls(
            room=room,
            array_center=record["array_center"],
            geometry=ArrayGeometry(record["geometry"]),
            source_position=record["source_position"],
            source_kind=record["source_kind"],
            snr_db=math.inf if snr_db is None else snr_db,
            source_path=record["source_path"],
            seed=record["seed"],
        )

    def __repr__(self) -> str:
        return (
            f"<{self.__class__.__name__} [DoA={self.ground_truth_doa:g}, "
            f"{self.source_kind.value}, SNR={self.snr_db:g} dB, T60={self.room.t60:.2f} s]>"
        )


class SceneRanges:
    """
    The parameter ranges that scenes are sampled from.

    Defaults are a 9 x 5 x 3 m room varied by +/- [1, 1, 0.5] m, an array
    center at [4.5, 2.5, 1.5] m varied by +/- 0.5 m, sources 1-3 m away on a
    5 degree grid, T60 of 0.13-1.0 s and SNR of 0-30 dB.
    """

    def __init__(
        self,
        room_dims: Sequence[float] = (9.0, 5.0, 3.0),
        room_dims_spread: Sequence[float] = (1.0, 1.0, 0.5),
        array_center: Sequence[float] = (4.5, 2.5, 1.5),
        array_center_spread: Sequence[float] = (0.5, 0.5, 0.5),
        distance: Tuple[float, float] = (1.0, 3.0),
        t60: Tuple[float, float] = (0.13, 1.0),
        snr_db: Tuple[float, float] = (0.0, 30.0),
        doa_step: float = 5.0,
        wall_margin: float = 0.1,
    ) -> None:
        self.room_dims = enforce_vector(room_dims, size=3, name="room_dims")
        self.room_dims_spread = enforce_vector(room_dims_spread, size=3, name="room_dims_spread")
        self.array_center = enforce_vector(array_center, size=3, name="array_center")
        self.array_center_spread = enforce_vector(
            array_center_spread, size=3, name="array_center_spread"
        )
        self.distance = _enforce_range(distance, name="distance")
        self.t60 = _enforce_range(t60, name="t60")
        self.snr_db = _enforce_range(snr_db, name="snr_db")
        if doa_step <= 0 or not math.isclose(360.0 / doa_step, round(360.0 / doa_step)):
            raise ValueError(f"doa_step must divide 360 degrees, but got {doa_step}.")
        self.doa_step = float(doa_step)
        self.wall_margin = float(wall_margin)

    @property
    def num_classes(self) -> int:
        return int(round(360.0 / self.doa_step))

    def to_record(self) -> dict:
        return {
            "room_dims": self.room_dims.tolist(),
            "room_dims_spread": self.room_dims_spread.tolist(),
            "array_center": self.array_center.tolist(),
            "array_center_spread": self.array_center_spread.tolist(),
            "distance": list(self.distance),
            "t60": list(self.t60),
            "snr_db": list(self.snr_db),
            "doa_step": self.doa_step,
            "wall_margin": self.wall_margin,
        }

    def replace(self, **kwargs: Any) -> "SceneRanges":
        """
        Return a copy with some ranges replaced, eg. `ranges.replace(t60=(0.5, 0.5))`.
        """
        values = self.to_record()
        unknown = set(kwargs) - set(values)
        if unknown:
            raise TypeError(f"Unknown scene ranges: {sorted(unknown)}")
        values.update(kwargs)
        return SceneRanges(**values)

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, SceneRanges) and self.to_record() == other.to_record()


def _enforce_range(value: Any, *, name: str) -> Tuple[float, float]:
    low, high = (float(v) for v in value)
    if not low <= high:
        raise ValueError(f"{name} must be an ascending (low, high) pair, but got {value!r}.")
    return (low, high)


def _draw(rng: np.random.Generator, bounds: Tuple[float, float]) -> float:
    # Always consumes exactly one draw, whatever the range.
    low, high = bounds
    fraction = rng.random()
    if low == high:
        return low
    return low + (high - low) * fraction


def _distance_to_walls(room_dims: np.ndarray, center: np.ndarray, direction: np.ndarray, margin: float) -> float:
    distance = math.inf
    for axis in range(2):
        if direction[axis] > 0:
            distance = min(distance, (room_dims[axis] - margin - center[axis]) / direction[axis])
        elif direction[axis] < 0:
            distance = min(distance, (margin - center[axis]) / direction[axis])
    return distance


def sample_scene(
    ranges: SceneRanges,
    rng: np.random.Generator,
    geometry: ArrayGeometry,
    source_kind: Optional[Union[SourceKind, str]] = None,
    corpus: Optional[Sequence[Union[str, Path]]] = None,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    max_retries: int = 100,
) -> Scene:
    """
    Draw a random scene from `ranges`.

    When `source_kind` is not given, a fair coin picks white noise or speech.
    Speech comes from `corpus` WAV files when a corpus is given, and from the
    synthetic speech generator otherwise. The source distance is clipped so that
    the source stays inside the room.
    """
    if source_kind is not None:
        source_kind = SourceKind(source_kind)
    corpus = [] if corpus is None else [str(path) for path in corpus]

    for _ in range(max_retries):
        dims = ranges.room_dims + rng.uniform(-1.0, 1.0, size=3) * ranges.room_dims_spread
        t60 = _draw(rng, ranges.t60)
        snr_db = _draw(rng, ranges.snr_db)
        center = ranges.array_center + rng.uniform(-1.0, 1.0, size=3) * ranges.array_center_spread
        doa = float(rng.integers(ranges.num_classes)) * ranges.doa_step
        distance = _draw(rng, ranges.distance)

        kind = source_kind
        if kind is None:
            if rng.random() < 0.5:
                kind = SourceKind.WHITE_NOISE
            elif corpus:
                kind = SourceKind.SPEECH_WAV
            else:
                kind = SourceKind.SYNTHETIC_SPEECH
        source_path = None
        if kind is SourceKind.SPEECH_WAV:
            if not corpus:
                raise IngestionError("speech-wav sources require a WAV corpus.")
            source_path = corpus[int(rng.integers(len(corpus)))]
        seed = int(rng.integers(0, 2**63 - 1))

        direction = np.array([math.cos(math.radians(doa)), math.sin(math.radians(doa))])
        reach = _distance_to_walls(dims, center, direction, ranges.wall_margin)
        if reach < ranges.distance[0]:
            continue
        distance = min(distance, reach)
        source = np.array([*(center[:2] + distance * direction), center[2]])

        try:
            room = RoomSpec(dims, t60=t60, fs=fs, c=c)
            return Scene(
                room=room,
                array_center=center,
                geometry=geometry,
                source_position=source,
                source_kind=kind,
                snr_db=snr_db,
                source_path=source_path,
                seed=seed,
            )
        except InvalidScene:
            continue

    raise SceneSamplingError(f"No valid scene found after {max_retries} attempts.")


def _image_axis(
    source: float, length: float, order: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Image coordinates along one axis, with the number of wall reflections of each.
    """
    n = np.arange(-order, order + 1)
    coordinates = np.concatenate([source + 2 * n * length, -source + 2 * n * length])
    reflections = np.concatenate([2 * np.abs(n), np.abs(n - 1) + np.abs(n)])
    return coordinates, reflections


def simulate_rirs(
    room: RoomSpec,
    source: Sequence[float],
    mics: np.ndarray,
    max_order: Optional[int] = None,
    max_duration: Optional[float] = None,
    oversampling: int = OVERSAMPLING,
) -> np.ndarray:
    """
    Room impulse responses from `source` to each microphone in `mics`, with
    the image source method.

    Returns an array of shape `(M, L)`. Each image contributes
    `beta ** reflections / (4 pi d)` at its delay. Images are rendered at
    `oversampling` times the sample rate, then low-pass filtered and decimated,
    so fractional delays survive as band-limited impulses. With
    `oversampling=1` every image falls on the nearest sample. `L` covers
    1.1 x T60, or `max_duration` seconds when that is shorter.
    """
    if oversampling < 1:
        raise ValueError(f"oversampling must be at least 1, but got {oversampling}.")
    source = enforce_vector(source, size=3, name="source")
    mics = np.atleast_2d(np.array(mics, dtype=np.float64))
    if mics.shape[1] != 3:
        raise InvalidScene(f"mics must have shape (M, 3), but got {mics.shape}.")
    if not room.contains(source) or not room.contains(mics):
        raise InvalidScene("Source and microphones must lie inside the room.")
    if np.any(np.linalg.norm(mics - source, axis=1) == 0.0):
        raise InvalidScene("The source coincides with a microphone.")

    coverage = 1.1 * room.t60
    if max_duration is not None:
        coverage = min(coverage, max_duration)
    length = int(math.ceil(coverage * room.fs)) + 1
    max_distance = length * room.c / room.fs
    beta = room.reflection_coefficient

    orders = [int(math.ceil(max_distance / (2 * size))) + 1 for size in room.dims]
    if max_order is not None:
        orders = [min(order, max_order) for order in orders]
    if beta == 0.0:
        orders = [0, 0, 0]

    axes = [_image_axis(source[axis], room.dims[axis], orders[axis]) for axis in range(3)]
    (y, y_count), (z, z_count) = axes[1], axes[2]
    yz = np.stack(np.meshgrid(y, z, indexing="ij"), axis=-1).reshape(-1, 2)
    yz_count = np.add.outer(y_count, z_count).reshape(-1)

    fine_length = length * oversampling
    fine_rate = room.fs * oversampling
    rirs = np.zeros((mics.shape[0], fine_length))
    x, x_count = axes[0]
    for coordinate, count in zip(x, x_count):
        reflections = count + yz_count
        keep = np.ones(len(reflections), dtype=bool)
        if max_order is not None:
            keep &= reflections <= max_order
        gains = np.where(keep, beta ** reflections.astype(np.float64), 0.0)
        if beta == 0.0:
            gains = np.where(reflections == 0, 1.0, 0.0)
        for index, mic in enumerate(mics):
            distance = np.sqrt(
                (coordinate - mic[0]) ** 2
                + (yz[:, 0] - mic[1]) ** 2
                + (yz[:, 1] - mic[2]) ** 2
            )
            taps = np.rint(distance * fine_rate / room.c).astype(np.int64)
            valid = (taps < fine_length) & (gains > 0.0)
            if np.any(valid):
                rirs[index] += np.bincount(
                    taps[valid],
                    weights=gains[valid] / (4 * np.pi * distance[valid]),
                    minlength=fine_length,
                )
    if oversampling == 1:
        return rirs
    # The decimation filter has unit DC gain, so an impulse loses a factor of
    # `oversampling` in height. Scale it back.
    return oversampling * resample_poly(rirs, 1, oversampling, axis=-1)[:, :length]


def simulate_rir(
    room: RoomSpec,
    source: Sequence[float],
    mic: Sequence[float],
    max_order: Optional[int] = None,
    max_duration: Optional[float] = None,
    oversampling: int = OVERSAMPLING,
) -> np.ndarray:
    """
    The room impulse response from `source` to a single microphone.
    """
    mic = enforce_vector(mic, size=3, name="mic")
    rirs = simulate_rirs(
        room,
        source,
        mic[None, :],
        max_order=max_order,
        max_duration=max_duration,
        oversampling=oversampling,
    )
    return rirs[0]


def measure_t60(rir: np.ndarray, fs: float, decay_range: Tuple[float, float] = (-5.0, -25.0)) -> float:
    """
    Estimate the reverberation time of an impulse response by Schroeder
    backward integration, extrapolating the decay over `decay_range` dB to 60 dB.
    """
    energy = np.cumsum(np.asarray(rir, dtype=np.float64)[::-1] ** 2)[::-1]
    if energy[0] <= 0:
        raise NumericError("Cannot measure the decay of a silent impulse response.")
    with np.errstate(divide="ignore"):
        decay = 10 * np.log10(energy / energy[0])
    upper, lower = decay_range
    region = np.nonzero((decay <= upper) & (decay >= lower))[0]
    if len(region) < 2:
        raise NumericError(f"The impulse response does not decay over {decay_range} dB.")
    slope, _ = np.polyfit(region / fs, decay[region], 1)
    if slope >= 0:
        raise NumericError("The impulse response does not decay.")
    return float(-60.0 / slope)


def _octave_gain(freqs: np.ndarray, corner_hz: float, slope_db_per_octave: float) -> np.ndarray:
    exponent = slope_db_per_octave / (20 * math.log10(2.0))
    ratio = np.maximum(freqs, corner_hz) / corner_hz
    return ratio ** exponent


def speech_shaped_noise(
    num_samples: int,
    rng: np.random.Generator,
    fs: float = SAMPLE_RATE,
    corner_hz: float = 500.0,
    slope_db_per_octave: float = -12.0,
) -> np.ndarray:
    """
    Gaussian noise with a flat spectrum below `corner_hz`, falling by
    `slope_db_per_octave` above it.
    """
    spectrum = np.fft.rfft(rng.standard_normal(num_samples))
    freqs = np.fft.rfftfreq(num_samples, d=1.0 / fs)
    return np.fft.irfft(spectrum * _octave_gain(freqs, corner_hz, slope_db_per_octave), n=num_samples)


def synthetic_speech(
    num_samples: int, rng: np.random.Generator, fs: float = SAMPLE_RATE
) -> np.ndarray:
    """
    A speech-like source: speech-shaped noise with a 4-8 Hz syllabic amplitude modulation.
    """
    carrier = speech_shaped_noise(num_samples, rng, fs=fs)
    rate = rng.uniform(4.0, 8.0)
    phase = rng.uniform(0.0, 2 * np.pi)
    times = np.arange(num_samples) / fs
    return carrier * (0.55 + 0.45 * np.sin(2 * np.pi * rate * times + phase))


def _fibonacci_directions(count: int, offset: float) -> np.ndarray:
    """
    The horizontal components of `count` directions spread evenly over the sphere.
    """
    index = np.arange(count)
    z = 1.0 - (2 * index + 1) / count
    radius = np.sqrt(1.0 - z ** 2)
    azimuth = offset + index * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([radius * np.cos(azimuth), radius * np.sin(azimuth)], axis=-1)


def diffuse_babble(
    num_channels: int,
    geometry: Optional[ArrayGeometry],
    duration: float,
    rng: np.random.Generator,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    num_sources: int = 32,
    slope_db_per_octave: float = -6.0,
) -> MultichannelSignal:
    """
    Stationary diffuse-like babble noise.

    `num_sources` independent speech-shaped noise plane waves arrive from
    directions spread evenly over the sphere, so that the coherence between
    two microphones falls with their distance. Without a geometry every channel
    sits at the same point.
    """
    if num_channels < 1:
        raise ValueError(f"num_channels must be positive, but got {num_channels}.")
    if num_sources < 1:
        raise ValueError(f"num_sources must be positive, but got {num_sources}.")
    if geometry is None:
        positions = np.zeros((num_channels, 2))
    elif geometry.num_mics != num_channels:
        raise ValueError(
            f"num_channels is {num_channels}, but the geometry has {geometry.num_mics} mics."
        )
    else:
        positions = geometry.centered()

    num_samples = int(round(duration * fs))
    freqs = np.fft.rfftfreq(num_samples, d=1.0 / fs)
    gain = _octave_gain(freqs, 500.0, slope_db_per_octave)
    directions = _fibonacci_directions(num_sources, rng.uniform(0.0, 2 * np.pi))

    total = np.zeros((num_channels, len(freqs)), dtype=np.complex128)
    for direction in directions:
        spectrum = np.fft.rfft(rng.standard_normal(num_samples)) * gain
        arrival = -(positions @ direction) / c
        total += spectrum * np.exp(-2j * np.pi * np.outer(arrival, freqs))

    channels = np.fft.irfft(total, n=num_samples, axis=-1) / math.sqrt(num_sources)
    return MultichannelSignal(channels, fs)


def _source_signal(scene: Scene, num_samples: int, rng: np.random.Generator) -> np.ndarray:
    fs = scene.room.fs
    if scene.source_kind is SourceKind.WHITE_NOISE:
        return rng.standard_normal(num_samples)
    if scene.source_kind is SourceKind.SYNTHETIC_SPEECH:
        return synthetic_speech(num_samples, rng, fs=fs)

    samples = read_wav(scene.source_path, fs=fs)
    if len(samples) < num_samples:
        raise IngestionError(
            f"{scene.source_path} holds {len(samples)} samples, but {num_samples} are required."
        )
    offset = int(rng.integers(0, len(samples) - num_samples + 1))
    return samples[offset : offset + num_samples]


def render_components(
    scene: Scene, duration: float, rng: Optional[np.random.Generator] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render the reverberant source images and the scaled noise of a scene
    separately, each of shape `(M, N)`.

    When `rng` is not given, the scene's own seed is used.
    """
    fs = scene.room.fs
    num_samples = int(round(duration * fs))
    if num_samples < FRAME_SIZE:
        raise InvalidScene(f"duration must cover one {FRAME_SIZE} sample frame.")
    if rng is None:
        if scene.seed is None:
            raise InvalidScene("Rendering requires an rng or a seeded scene.")
        rng = np.random.default_rng(scene.seed)

    source = _source_signal(scene, num_samples, rng)
    rirs = simulate_rirs(scene.room, scene.source_position, scene.mic_positions, max_duration=duration)
    images = np.stack([fftconvolve(source, rir)[:num_samples] for rir in rirs])

    source_power = float(np.mean(images ** 2))
    if not np.isfinite(source_power) or source_power <= 0.0:
        raise DegenerateScene("The source image is silent at every microphone.")

    if math.isinf(scene.snr_db) and scene.snr_db > 0:
        return images, np.zeros_like(images)

    babble = diffuse_babble(
        scene.geometry.num_mics, scene.geometry, duration, rng, fs=fs, c=scene.room.c
    ).channels
    noise_power = float(np.mean(babble ** 2))
    scale = math.sqrt(source_power / (noise_power * 10 ** (scene.snr_db / 10)))
    return images, babble * scale


def render_scene(
    scene: Scene, duration: float, rng: Optional[np.random.Generator] = None
) -> MultichannelSignal:
    """
    Render a scene as microphone signals: the source convolved with each
    room impulse response, plus babble at the scene's SNR.
    """
    images, noise = render_components(scene, duration, rng)
    return MultichannelSignal(images + noise, scene.room.fs)


def render_plane_wave(
    geometry: ArrayGeometry,
    doa: float,
    source: np.ndarray,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
) -> MultichannelSignal:
    """
    Free-field, noise-free rendering of a far-field plane wave from `doa` degrees.

    Fractional delays are applied in the frequency domain, so the result is a
    circular shift of `source` at each microphone.
    """
    source = np.asarray(source, dtype=np.float64)
    num_samples = len(source)
    freqs = np.fft.rfftfreq(num_samples, d=1.0 / fs)
    arrival = arrival_delays(geometry, np.array([doa]), c)[0]
    spectra = np.fft.rfft(source) * np.exp(-2j * np.pi * np.outer(arrival, freqs))
    return MultichannelSignal(np.fft.irfft(spectra, n=num_samples, axis=-1), fs)
