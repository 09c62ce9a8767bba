import itertools
import math
from pathlib import Path
from typing import Any, List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist

from ._exceptions import GeometryFileError, InvalidGeometry, map_exceptions

__all__ = [
    "ArrayGeometry",
    "LagBound",
    "pair_indices",
    "lag_bound",
    "steering_delay",
    "arrival_delays",
    "deviate_geometry",
    "random_geometry",
    "arc_array",
    "read_geometry",
    "write_geometry",
]

SPEED_OF_SOUND = 343.0
SAMPLE_RATE = 8000
DEFAULT_ETA = 4

# Five microphone arc, 0.4 m wide and about 0.14 m deep.
ARC_COORDINATES = [
    (-0.20, 0.071),
    (-0.073, -0.038),
    (0.0, -0.067),
    (0.073, -0.038),
    (0.20, 0.071),
]


def enforce_positions(value: Any, *, name: str) -> np.ndarray:
    """
    Type check for microphone coordinates, returning a read-only `(M, 2)` array.
    """
    try:
        positions = np.array(value, dtype=np.float64)
    except (TypeError, ValueError):
        seen_type = type(value).__name__
        raise InvalidGeometry(f"{name} must be a sequence of (x, y) pairs, but got {seen_type}.")

    if positions.ndim != 2 or positions.shape[1] != 2:
        raise InvalidGeometry(
            f"{name} must have shape (M, 2), but got {positions.shape}."
        )
    if positions.shape[0] < 2:
        raise InvalidGeometry(f"{name} requires at least 2 microphones.")
    if not np.all(np.isfinite(positions)):
        raise InvalidGeometry(f"{name} contains non-finite coordinates.")
    if np.max(pdist(positions)) <= 0.0:
        raise InvalidGeometry(f"{name} is degenerate, all microphones coincide.")

    positions.flags.writeable = False
    return positions


class ArrayGeometry:
    """
    An ordered set of microphone positions in the x-y plane, in meters.

    ```python
    geometry = doacore.ArrayGeometry([(0.0, 0.0), (0.2, 0.0), (0.1, 0.15)])
    ```

    Instances are immutable. Microphone order is significant: it fixes the
    pair enumeration and the order of the coordinates in geometry-aware features.
    """

    def __init__(self, mics: Union[Sequence[Sequence[float]], np.ndarray]) -> None:
        """
        Parameters:
            mics: The microphone coordinates, as a sequence of `(x, y)` pairs.
        """
        self._mics = enforce_positions(mics, name="mics")

    @property
    def mics(self) -> np.ndarray:
        return self._mics

    @property
    def num_mics(self) -> int:
        return self._mics.shape[0]

    @property
    def r_max(self) -> float:
        """
        The largest distance between any two microphones.
        """
        return float(np.max(pdist(self._mics)))

    @property
    def centroid(self) -> np.ndarray:
        return self._mics.mean(axis=0)

    def centered(self) -> np.ndarray:
        """
        Return the coordinates relative to the array centroid.
        """
        return self._mics - self.centroid

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return pair_indices(self.num_mics)

    def __len__(self) -> int:
        return self.num_mics

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, ArrayGeometry) and np.array_equal(
            self._mics, other._mics
        )

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.num_mics} mics, r_max={self.r_max:.3f} m]>"


class LagBound:
    """
    The constrained GCC-PHAT lag window `[-tau_max, tau_max - 1]`, in samples.
    """

    def __init__(self, tau_max: int, *, eta: int, fs: float, c: float) -> None:
        if tau_max < 1:
            raise ValueError(f"tau_max must be positive, but got {tau_max}.")
        self.tau_max = int(tau_max)
        self.eta = int(eta)
        self.fs = float(fs)
        self.c = float(c)

    @classmethod
    def for_distance(
        cls,
        r_max: float,
        fs: float = SAMPLE_RATE,
        c: float = SPEED_OF_SOUND,
        eta: int = DEFAULT_ETA,
    ) -> "LagBound":
        """
        The lag bound of any array whose largest inter-microphone distance is `r_max`.
        """
        if fs <= 0 or c <= 0:
            raise ValueError("fs and c must be positive.")
        if eta < 0:
            raise ValueError(f"eta must be non-negative, but got {eta}.")
        if not r_max > 0:
            raise InvalidGeometry("Lag bound requires a non-degenerate array.")
        # Round before the ceiling, so that exact multiples such as
        # 0.343 m at 8 kHz do not pick up a spurious extra sample.
        samples = math.ceil(round(r_max * fs / c, 9))
        return cls(samples + eta, eta=eta, fs=fs, c=c)

    @property
    def width(self) -> int:
        return 2 * self.tau_max

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-self.tau_max, self.tau_max)

    def __eq__(self, other: Any) -> bool:
        return (
            isinstance(other, LagBound)
            and self.tau_max == other.tau_max
            and self.eta == other.eta
            and self.fs == other.fs
            and self.c == other.c
        )

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(tau_max={self.tau_max}, eta={self.eta}, fs={self.fs:g}, c={self.c:g})"


def pair_indices(num_mics: int) -> List[Tuple[int, int]]:
    """
    All unordered microphone pairs `(k, l)` with `k < l`, in lexicographic order.
    """
    if num_mics < 2:
        raise InvalidGeometry(f"At least 2 microphones are required, but got {num_mics}.")
    return list(itertools.combinations(range(num_mics), 2))


def lag_bound(
    geometry: ArrayGeometry,
    fs: float = SAMPLE_RATE,
    c: float = SPEED_OF_SOUND,
    eta: int = DEFAULT_ETA,
) -> LagBound:
    """
    Return `ceil(r_max * fs / c) + eta`, the largest physically possible
    inter-microphone delay of `geometry` plus a safety margin.
    """
    return LagBound.for_distance(geometry.r_max, fs=fs, c=c, eta=eta)


def _direction(theta: Union[float, np.ndarray]) -> np.ndarray:
    radians = np.deg2rad(theta)
    return np.stack([np.cos(radians), np.sin(radians)], axis=-1)


def steering_delay(
    geometry: ArrayGeometry, k: int, l: int, theta: float, c: float = SPEED_OF_SOUND
) -> float:
    """
    The far-field delay `((r_k - r_l) . u(theta)) / c`, in seconds.

    The delay is positive when microphone `k` is nearer the source, so that
    channel `l` lags channel `k`.
    """
    num_mics = geometry.num_mics
    if not (0 <= k < num_mics and 0 <= l < num_mics):
        raise ValueError(f"Microphone indices ({k}, {l}) out of range for {num_mics} mics.")
    baseline = geometry.mics[k] - geometry.mics[l]
    return float(baseline @ _direction(theta)) / c


def arrival_delays(
    geometry: ArrayGeometry, thetas: np.ndarray, c: float = SPEED_OF_SOUND
) -> np.ndarray:
    """
    Per-microphone far-field arrival times relative to the array centroid.

    Returns an array of shape `(len(thetas), M)`, in seconds. A microphone nearer
    the source has a negative arrival time.
    """
    directions = _direction(np.atleast_1d(np.asarray(thetas, dtype=np.float64)))
    return -(directions @ geometry.centered().T) / c


def deviate_geometry(
    geometry: ArrayGeometry, step: float, rng: np.random.Generator
) -> ArrayGeometry:
    """
    Move every microphone by exactly `step` meters, each in its own uniformly
    drawn direction.
    """
    if step < 0:
        raise ValueError(f"step must be non-negative, but got {step}.")
    angles = rng.uniform(0.0, 2.0 * np.pi, size=geometry.num_mics)
    offsets = step * np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return ArrayGeometry(geometry.mics + offsets)


def random_geometry(
    num_mics: int,
    rng: np.random.Generator,
    width: float = 0.4,
    depth: float = 0.4,
) -> ArrayGeometry:
    """
    Draw microphone coordinates uniformly over a `width` x `depth` rectangle
    centered on the origin.
    """
    if num_mics < 2:
        raise InvalidGeometry(f"At least 2 microphones are required, but got {num_mics}.")
    if width <= 0 or depth <= 0:
        raise ValueError("width and depth must be positive.")
    x = rng.uniform(-width / 2, width / 2, size=num_mics)
    y = rng.uniform(-depth / 2, depth / 2, size=num_mics)
    return ArrayGeometry(np.stack([x, y], axis=-1))


def arc_array() -> ArrayGeometry:
    """
    The fixed five microphone arc that the geometry-unaware networks are trained on.
    """
    return ArrayGeometry(ARC_COORDINATES)


def read_geometry(path: Union[str, Path]) -> ArrayGeometry:
    """
    Read a geometry file: one microphone per line as `x y` in meters.

    Blank lines and text after `#` are ignored.
    """
    mics = []
    with map_exceptions({OSError: GeometryFileError, UnicodeDecodeError: GeometryFileError}):
        text = Path(path).read_text(encoding="utf-8")
    for number, line in enumerate(text.splitlines(), start=1):
        fields = line.split("#", 1)[0].split()
        if not fields:
            continue
        if len(fields) != 2:
            raise GeometryFileError(
                f"{path}:{number}: expected 2 fields 'x y', but got {len(fields)}."
            )
        with map_exceptions({ValueError: GeometryFileError}):
            mics.append((float(fields[0]), float(fields[1])))
    return ArrayGeometry(mics)


def write_geometry(path: Union[str, Path], geometry: ArrayGeometry) -> None:
    lines = ["# x y (meters)"]
    lines += [f"{x!r} {y!r}" for x, y in geometry.mics.tolist()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
