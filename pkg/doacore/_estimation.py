import csv
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._exceptions import EmptyInput, NumericError
from ._features import parabolic_peak

__all__ = [
    "DoaEstimate",
    "EvalResult",
    "frame_estimate",
    "aggregate",
    "circular_error",
    "evaluate",
]

RESULTS_SCHEMA = "doacore.results/1"


class DoaEstimate:
    """
    Per-frame DoA estimates of a signal, with their circular median as the global estimate.
    """

    def __init__(
        self,
        per_frame: Sequence[float],
        doa: Optional[float] = None,
        algorithm: Optional[str] = None,
    ) -> None:
        self.per_frame = [float(theta) % 360.0 for theta in per_frame]
        self.doa = aggregate(self.per_frame) if doa is None else float(doa) % 360.0
        self.algorithm = algorithm

    @property
    def num_frames(self) -> int:
        return len(self.per_frame)

    def __repr__(self) -> str:
        algorithm = f"{self.algorithm}, " if self.algorithm else ""
        return f"<{self.__class__.__name__} [{algorithm}{self.doa:.2f} deg over {self.num_frames} frames]>"


class EvalResult:
    """
    The accuracy of a set of trials.

    `mae` is the mean circular error in degrees. `accuracy` is the percentage
    of trials whose error is at most `epsilon` degrees.
    """

    def __init__(
        self,
        estimates: Sequence[float],
        truths: Sequence[float],
        epsilon: float = 5.0,
        trial_ids: Optional[Sequence[int]] = None,
    ) -> None:
        if len(estimates) != len(truths):
            raise ValueError("estimates and truths must have the same length.")
        if len(estimates) == 0:
            raise EmptyInput("Evaluation requires at least one trial.")
        self.estimates = np.asarray(estimates, dtype=np.float64)
        self.truths = np.asarray(truths, dtype=np.float64)
        self.trial_ids = list(range(len(estimates))) if trial_ids is None else list(trial_ids)
        self.epsilon = float(epsilon)
        self.deltas = circular_error(self.estimates, self.truths)

    @property
    def n_trials(self) -> int:
        return len(self.deltas)

    @property
    def mae(self) -> float:
        return float(np.mean(self.deltas))

    @property
    def accuracy(self) -> float:
        return 100.0 * float(np.count_nonzero(self.deltas <= self.epsilon)) / self.n_trials

    def summary(self) -> dict:
        return {
            "n_trials": self.n_trials,
            "mae_deg": self.mae,
            "accuracy_pct": self.accuracy,
            "epsilon_deg": self.epsilon,
        }

    def write_csv(self, path: Union[str, Path]) -> None:
        """
        Write one row per trial, followed by a `# summary:` line.
        """
        with open(path, "w", newline="", encoding="utf-8") as stream:
            stream.write(f"# schema: {RESULTS_SCHEMA}\n")
            writer = csv.writer(stream)
            writer.writerow(["trial_id", "theta_true", "theta_est", "delta"])
            for row in zip(self.trial_ids, self.truths, self.estimates, self.deltas):
                trial_id, truth, estimate, delta = row
                writer.writerow([trial_id, f"{truth:.6f}", f"{estimate:.6f}", f"{delta:.6f}"])
            summary = " ".join(f"{key}={value:.6f}" for key, value in self.summary().items())
            stream.write(f"# summary: {summary}\n")

    def __repr__(self) -> str:
        return (
            f"<{self.__class__.__name__} [N={self.n_trials}, MAE={self.mae:.2f} deg, "
            f"Accuracy={self.accuracy:.1f}%]>"
        )


def frame_estimate(scores: Union[Sequence[float], np.ndarray]) -> float:
    """
    Map scores over `C` uniformly spaced DoA classes to an angle in degrees.

    The best class is refined by parabolic interpolation, where the neighbors
    of class 0 are classes `C - 1` and 1. Ties go to the smallest class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or len(scores) < 3:
        raise ValueError(f"Expected at least 3 class scores, but got shape {scores.shape}.")
    if not np.all(np.isfinite(scores)):
        raise NumericError("Class scores must be finite.")
    num_classes = len(scores)
    best = int(np.argmax(scores))
    offset = parabolic_peak(
        scores[(best - 1) % num_classes], scores[best], scores[(best + 1) % num_classes]
    )
    return float(((best + offset) * (360.0 / num_classes)) % 360.0)


def circular_error(
    estimate: Union[float, np.ndarray], truth: Union[float, np.ndarray]
) -> Union[float, np.ndarray]:
    """
    The angle between two directions, in `[0, 180]` degrees.
    """
    difference = np.abs(np.asarray(estimate, dtype=np.float64) - truth) % 360.0
    error = np.minimum(difference, 360.0 - difference)
    if np.ndim(error) == 0:
        return float(error)
    return error


def aggregate(per_frame: Iterable[float]) -> float:
    """
    The circular median of frame estimates: the sample with the least total
    circular distance to all others. Ties go to the smallest angle.
    """
    angles = np.asarray(list(per_frame), dtype=np.float64) % 360.0
    if len(angles) == 0:
        raise EmptyInput("Cannot aggregate an empty list of frame estimates.")
    costs = circular_error(angles[:, None], angles[None, :]).sum(axis=1)
    candidates = angles[costs <= costs.min() + 1e-9]
    return float(candidates.min())


def evaluate(trials: Sequence[Tuple[float, float]], epsilon: float = 5.0) -> EvalResult:
    """
    Score `(estimate, truth)` pairs, counting errors of exactly `epsilon` as correct.
    """
    trials = list(trials)
    if not trials:
        raise EmptyInput("Evaluation requires at least one trial.")
    estimates, truths = zip(*trials)
    return EvalResult(estimates, truths, epsilon=epsilon)
