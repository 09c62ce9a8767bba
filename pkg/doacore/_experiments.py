import csv
import json
import logging
import math
import os
import struct
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ._api import NEURAL_ALGORITHMS, ALGORITHMS, create_estimator
from ._concurrency import item_rng, run_trials
from ._estimation import RESULTS_SCHEMA, EvalResult, circular_error
from ._exceptions import (
    ConfigurationError,
    DegenerateScene,
    EmptyInput,
    EstimationFailure,
    IngestionError,
    InvalidGeometry,
    InvalidScene,
    NumericError,
    SchemaMismatch,
    SilentFrame,
    map_exceptions,
)
from ._features import FeatureKind, assemble_feature, feature_size, frame_signal, gcc_phat_matrix
from ._geometry import (
    DEFAULT_ETA,
    SAMPLE_RATE,
    SPEED_OF_SOUND,
    ArrayGeometry,
    LagBound,
    arc_array,
    deviate_geometry,
    lag_bound,
    random_geometry,
)
from ._mlp import LabeledDataset, MlpArchitecture, MlpModel, TrainConfig, load_model, split_validation, train
from ._room import MultichannelSignal, SceneRanges, SourceKind, render_scene, sample_scene
from ._trace import Trace
from .estimators import EstimatorInterface

__all__ = [
    "ExperimentConfig",
    "DatasetManifest",
    "ExperimentResult",
    "generate_dataset",
    "load_dataset",
    "train_from_dataset",
    "load_models",
    "run_evaluation",
    "run_deviation_experiment",
    "run_randomized_experiment",
    "read_results_csv",
    "write_plotdata",
]

logger = logging.getLogger("doacore.experiments")

# Independent seed streams.
SCENE_STREAM = 0
DEVIATION_STREAM = 1
SAMPLE_STREAM = 2
VALIDATION_STREAM = 3

DATASET_MAGIC = b"DOACDSET"
DATASET_VERSION = 1
DATASET_SCHEMA = "doacore.dataset/1"

NUM_MICS = 5
RANDOM_ARRAY_SIZE = (0.4, 0.4)
DEFAULT_STEPS = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05)

FIXED_ARC = "fixed-arc"
RANDOM_PER_SAMPLE = "random-per-sample"

# Failures that exclude a single trial rather than abort a run.
TRIAL_FAILURES = (EstimationFailure, SilentFrame, NumericError, EmptyInput)
SCENE_FAILURES = (InvalidScene, InvalidGeometry, IngestionError)


class ExperimentConfig:
    """
    Everything an experiment run depends on, besides the trained models.

    ```python
    config = doacore.ExperimentConfig(experiment="deviation", trials=100, seed=7)
    ```

    Evaluation scenes share a fixed T60 and SNR. All other scene parameters
    are drawn from `ranges`.
    """

    def __init__(
        self,
        experiment: str = "randomized",
        trials: int = 100,
        deviation_steps: Sequence[float] = DEFAULT_STEPS,
        t60: float = 0.5,
        snr_db: float = 20.0,
        duration: float = 5.0,
        seed: int = 0,
        algorithms: Optional[Sequence[str]] = None,
        models: Optional[Mapping[str, Union[str, Path]]] = None,
        output_dir: Union[str, Path] = "results",
        corpus_dir: Optional[Union[str, Path]] = None,
        threads: int = 1,
        fs: float = SAMPLE_RATE,
        c: float = SPEED_OF_SOUND,
        eta: int = DEFAULT_ETA,
        samples: int = 50000,
        sample_duration: float = 0.3,
        source_kind: Optional[Union[SourceKind, str]] = None,
        epsilon: float = 5.0,
        train: Optional[TrainConfig] = None,
        ranges: Optional[SceneRanges] = None,
    ) -> None:
        if experiment not in ("deviation", "randomized"):
            raise ConfigurationError(
                f"experiment must be 'deviation' or 'randomized', but got {experiment!r}."
            )
        if trials < 1:
            raise ConfigurationError(f"trials must be at least 1, but got {trials}.")
        steps = [float(step) for step in deviation_steps]
        if not steps or any(step < 0 for step in steps) or steps != sorted(steps):
            raise ConfigurationError(
                f"deviation_steps must be non-negative and ascending, but got {steps}."
            )
        if algorithms is not None:
            unknown = [name for name in algorithms if name not in ALGORITHMS]
            if unknown:
                raise ConfigurationError(f"Unknown algorithms: {', '.join(unknown)}")
        if threads < 1:
            raise ConfigurationError(f"threads must be at least 1, but got {threads}.")
        if samples < 1:
            raise ConfigurationError(f"samples must be at least 1, but got {samples}.")

        self.experiment = experiment
        self.trials = int(trials)
        self.deviation_steps = steps
        self.t60 = float(t60)
        self.snr_db = float(snr_db)
        self.duration = float(duration)
        self.seed = int(seed)
        self.algorithms = None if algorithms is None else list(algorithms)
        self.models = {name: Path(path) for name, path in (models or {}).items()}
        self.output_dir = Path(output_dir)
        self.corpus_dir = None if corpus_dir is None else Path(corpus_dir)
        self.threads = int(threads)
        self.fs = float(fs)
        self.c = float(c)
        self.eta = int(eta)
        self.samples = int(samples)
        self.sample_duration = float(sample_duration)
        self.source_kind = None if source_kind is None else SourceKind(source_kind)
        self.epsilon = float(epsilon)
        self.train = TrainConfig(seed=self.seed) if train is None else train
        self.ranges = SceneRanges() if ranges is None else ranges

    @property
    def selected_algorithms(self) -> List[str]:
        if self.algorithms is not None:
            return list(self.algorithms)
        if self.experiment == "deviation":
            return ["fc-full", "fc-max", "fc-ga", "srp-phat", "music"]
        return ["srp-phat", "music", "fc-ga"]

    @property
    def evaluation_ranges(self) -> SceneRanges:
        return self.ranges.replace(t60=(self.t60, self.t60), snr_db=(self.snr_db, self.snr_db))

    @property
    def evaluation_source_kind(self) -> SourceKind:
        """
        Evaluation scenes use speech: corpus files when a corpus is configured,
        and synthetic speech otherwise.
        """
        if self.source_kind is not None:
            return self.source_kind
        return SourceKind.SPEECH_WAV if self.corpus_dir is not None else SourceKind.SYNTHETIC_SPEECH

    def corpus(self) -> List[str]:
        if self.corpus_dir is None:
            return []
        if not self.corpus_dir.is_dir():
            raise IngestionError(f"Corpus directory not found: {self.corpus_dir}")
        files = sorted(str(path) for path in self.corpus_dir.rglob("*.wav"))
        if not files:
            raise IngestionError(f"No WAV files in corpus directory {self.corpus_dir}")
        return files

    def replace(self, **kwargs: Any) -> "ExperimentConfig":
        values = dict(vars(self))
        unknown = set(kwargs) - set(values)
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {sorted(unknown)}")
        values.update(kwargs)
        return ExperimentConfig(**values)

    def __repr__(self) -> str:
        return (
            f"{self.__class__.__name__}(experiment={self.experiment!r}, trials={self.trials}, "
            f"seed={self.seed}, algorithms={self.selected_algorithms})"
        )


class DatasetManifest:
    """
    Describes a generated training set.

    Geometry-aware feature kinds draw a different random array for every
    sample. All other kinds use the fixed arc array.
    """

    def __init__(
        self,
        num_samples: int,
        kind: Union[FeatureKind, str],
        geometry_policy: Optional[str] = None,
        seed: int = 0,
        ranges: Optional[SceneRanges] = None,
        sample_duration: float = 0.3,
        fs: float = SAMPLE_RATE,
        c: float = SPEED_OF_SOUND,
        eta: int = DEFAULT_ETA,
        source_kind: Optional[Union[SourceKind, str]] = None,
        corpus: Sequence[str] = (),
        schema_version: int = DATASET_VERSION,
    ) -> None:
        kind = FeatureKind(kind)
        expected_policy = RANDOM_PER_SAMPLE if kind.geometry_aware else FIXED_ARC
        if geometry_policy is None:
            geometry_policy = expected_policy
        if geometry_policy != expected_policy:
            raise ConfigurationError(
                f"{kind.value!r} datasets require the {expected_policy!r} geometry policy."
            )
        if num_samples < 1:
            raise ConfigurationError(f"num_samples must be at least 1, but got {num_samples}.")
        if schema_version != DATASET_VERSION:
            raise SchemaMismatch(f"Dataset schema version {schema_version} is not supported.")
        self.num_samples = int(num_samples)
        self.kind = kind
        self.geometry_policy = geometry_policy
        self.seed = int(seed)
        self.ranges = SceneRanges() if ranges is None else ranges
        self.sample_duration = float(sample_duration)
        self.fs = float(fs)
        self.c = float(c)
        self.eta = int(eta)
        self.source_kind = None if source_kind is None else SourceKind(source_kind)
        self.corpus = [str(path) for path in corpus]
        self.schema_version = schema_version

    @property
    def random_geometry(self) -> bool:
        return self.geometry_policy == RANDOM_PER_SAMPLE

    @property
    def tau_max(self) -> int:
        """
        The lag bound of full GCC-PHAT features. A random array can span the
        diagonal of its bounding rectangle.
        """
        if self.random_geometry:
            diagonal = math.hypot(*RANDOM_ARRAY_SIZE)
            return LagBound.for_distance(diagonal, fs=self.fs, c=self.c, eta=self.eta).tau_max
        return lag_bound(arc_array(), fs=self.fs, c=self.c, eta=self.eta).tau_max

    @property
    def feature_size(self) -> int:
        return feature_size(self.kind, NUM_MICS, self.tau_max)

    def to_record(self) -> dict:
        return {
            "num_samples": self.num_samples,
            "kind": self.kind.value,
            "geometry_policy": self.geometry_policy,
            "seed": self.seed,
            "ranges": self.ranges.to_record(),
            "sample_duration": self.sample_duration,
            "fs": self.fs,
            "c": self.c,
            "eta": self.eta,
            "source_kind": None if self.source_kind is None else self.source_kind.value,
            "corpus": self.corpus,
            "schema_version": self.schema_version,
        }

    @classmethod
    def from_record(cls, record: dict) -> "DatasetManifest":
        record = dict(record)
        record["ranges"] = SceneRanges(**record["ranges"])
        return cls(**record)

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.num_samples} x {self.kind.value}, {self.geometry_policy}, seed={self.seed}]>"


def _dataset_header(manifest: DatasetManifest) -> bytes:
    header = json.dumps(
        {
            "schema": DATASET_SCHEMA,
            "manifest": manifest.to_record(),
            "feature_size": manifest.feature_size,
        },
        sort_keys=True,
    ).encode("utf-8")
    return DATASET_MAGIC + struct.pack("<HI", DATASET_VERSION, len(header)) + header


def _dataset_record(manifest: DatasetManifest, index: int) -> np.ndarray:
    rng = item_rng(manifest.seed, SAMPLE_STREAM, index)
    if manifest.random_geometry:
        geometry = random_geometry(NUM_MICS, rng, *RANDOM_ARRAY_SIZE)
    else:
        geometry = arc_array()
    scene = sample_scene(
        manifest.ranges,
        rng,
        geometry,
        source_kind=manifest.source_kind,
        corpus=manifest.corpus,
        fs=manifest.fs,
        c=manifest.c,
    )
    signal = render_scene(scene, manifest.sample_duration)

    if manifest.kind is FeatureKind.GEOMETRY_AWARE:
        bound = lag_bound(geometry, fs=manifest.fs, c=manifest.c, eta=manifest.eta)
    else:
        bound = LagBound(manifest.tau_max, eta=manifest.eta, fs=manifest.fs, c=manifest.c)

    # Keep the last frame that carries signal.
    for frame in reversed(frame_signal(signal)):
        g = gcc_phat_matrix(frame, bound)
        if not g.silent:
            break
    else:
        raise DegenerateScene(f"Sample {index} rendered only silent frames.")

    feature = assemble_feature(manifest.kind, g, geometry, expected_size=manifest.feature_size)
    label = int(round(scene.ground_truth_doa / manifest.ranges.doa_step)) % manifest.ranges.num_classes
    return np.concatenate([[float(label)], feature.values])


def _completed_records(path: Path, header: bytes, record_size: int) -> int:
    """
    Validate an existing dataset file, dropping any partially written record.
    """
    size = path.stat().st_size
    with open(path, "rb") as stream:
        found = stream.read(len(header))
    if found != header:
        raise SchemaMismatch(f"{path} was generated from a different manifest.")
    completed = (size - len(header)) // record_size
    end = len(header) + completed * record_size
    if end != size:
        logger.warning("Dropping a partial record at the end of %s", path)
        os.truncate(path, end)
    return completed


def generate_dataset(
    manifest: DatasetManifest,
    path: Union[str, Path],
    threads: int = 1,
    chunk_size: int = 256,
    extensions: Optional[dict] = None,
) -> Path:
    """
    Generate a labeled single-frame dataset, resuming a partially written file.

    The file holds magic bytes, the format version, a JSON header with the
    manifest, then one little-endian float64 record `[label, features...]` per
    sample. Every sample draws from its own seed, so the file is identical
    however many threads generate it and however often generation resumes.
    """
    path = Path(path)
    header = _dataset_header(manifest)
    record_size = (1 + manifest.feature_size) * 8
    kwargs = {"samples": manifest.num_samples, "kind": manifest.kind.value, "path": str(path)}

    with Trace("experiments.generate_dataset", extensions, kwargs) as trace:
        completed = 0
        if path.exists():
            completed = _completed_records(path, header, record_size)
            if completed:
                logger.info("Resuming %s at sample %d", path, completed)
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(header)

        with open(path, "ab") as stream:
            for start in range(completed, manifest.num_samples, chunk_size):
                indices = range(start, min(start + chunk_size, manifest.num_samples))
                records = run_trials(partial(_dataset_record, manifest), indices, threads)
                stream.write(np.stack(records).astype("<f8").tobytes())
                stream.flush()
                logger.info("Generated %d of %d samples", indices[-1] + 1, manifest.num_samples)
        trace.return_value = path
    return path


def load_dataset(
    path: Union[str, Path], manifest: Optional[DatasetManifest] = None
) -> Tuple[DatasetManifest, LabeledDataset]:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"Dataset file not found: {path}")
    data = path.read_bytes()
    if not data.startswith(DATASET_MAGIC):
        raise SchemaMismatch(f"{path} is not a doacore dataset file.")
    offset = len(DATASET_MAGIC)

    with map_exceptions({struct.error: SchemaMismatch}):
        version, header_size = struct.unpack_from("<HI", data, offset)
    if version != DATASET_VERSION:
        raise SchemaMismatch(f"{path} has format version {version}, but {DATASET_VERSION} is supported.")
    offset += struct.calcsize("<HI")

    with map_exceptions({ValueError: SchemaMismatch, KeyError: SchemaMismatch, TypeError: SchemaMismatch}):
        header = json.loads(data[offset : offset + header_size].decode("utf-8"))
        if header["schema"] != DATASET_SCHEMA:
            raise SchemaMismatch(f"{path} has schema {header['schema']!r}.")
        found = DatasetManifest.from_record(header["manifest"])
    offset += header_size

    if manifest is not None and manifest.to_record() != found.to_record():
        raise SchemaMismatch(f"{path} was generated from a different manifest.")

    width = 1 + found.feature_size
    body = len(data) - offset
    if body != found.num_samples * width * 8:
        raise SchemaMismatch(
            f"{path} holds {body // (width * 8)} of {found.num_samples} samples; resume generation first."
        )
    records = np.frombuffer(data, dtype="<f8", offset=offset).reshape(-1, width)
    dataset = LabeledDataset(records[:, 1:].astype(np.float64), records[:, 0].astype(np.int64))
    return found, dataset


def train_from_dataset(
    path: Union[str, Path], config: Optional[TrainConfig] = None, extensions: Optional[dict] = None
) -> MlpModel:
    """
    Train a classifier on a generated dataset, holding out a validation split.

    The returned model records the feature kind and lag bound it expects.
    """
    manifest, dataset = load_dataset(path)
    config = TrainConfig(seed=manifest.seed) if config is None else config
    training, validation = split_validation(
        dataset, config.validation_fraction, item_rng(config.seed, VALIDATION_STREAM)
    )
    architecture = MlpArchitecture(
        input_size=dataset.feature_size, output_size=manifest.ranges.num_classes
    )
    model = train(training, validation, config, architecture, extensions=extensions)
    model.metadata.update(
        {
            "feature_kind": manifest.kind.value,
            "tau_max": manifest.tau_max,
            "fs": manifest.fs,
            "c": manifest.c,
            "eta": manifest.eta,
            "num_mics": NUM_MICS,
            "samples": len(dataset),
            "dataset_seed": manifest.seed,
        }
    )
    return model


def load_models(config: ExperimentConfig, algorithms: Sequence[str]) -> Dict[str, MlpModel]:
    """
    Load the model file configured for every neural algorithm in `algorithms`.
    """
    models = {}
    for algorithm in algorithms:
        if algorithm not in NEURAL_ALGORITHMS:
            continue
        path = config.models.get(algorithm)
        if path is None:
            raise ConfigurationError(f"No model file configured for {algorithm}.")
        if not path.is_file():
            raise ConfigurationError(f"Model file for {algorithm} not found: {path}")
        models[algorithm] = load_model(path)
    return models


class ResultRow:
    """
    Every trial of one algorithm, at one deviation step.

    Trials are `(trial_id, truth, estimate)` triples. A failed trial has no
    estimate, and has no truth when its scene could not be sampled.
    """

    def __init__(
        self,
        algorithm: str,
        step: Optional[float],
        trials: Sequence[Tuple[int, Optional[float], Optional[float]]],
        epsilon: float = 5.0,
    ) -> None:
        self.algorithm = algorithm
        self.step = step
        self.trials = list(trials)
        succeeded = [trial for trial in self.trials if trial[2] is not None]
        self.n_failed = len(self.trials) - len(succeeded)
        self.evaluation: Optional[EvalResult] = None
        if succeeded:
            trial_ids, truths, estimates = zip(*succeeded)
            self.evaluation = EvalResult(estimates, truths, epsilon=epsilon, trial_ids=trial_ids)

    @property
    def n_trials(self) -> int:
        return 0 if self.evaluation is None else self.evaluation.n_trials

    @property
    def mae(self) -> float:
        return math.nan if self.evaluation is None else self.evaluation.mae

    @property
    def accuracy(self) -> float:
        return math.nan if self.evaluation is None else self.evaluation.accuracy

    def write_csv(self, path: Union[str, Path]) -> None:
        """
        Write one row per trial, failed trials included, followed by a
        `# summary:` line when any trial succeeded.
        """
        with open(path, "w", newline="", encoding="utf-8") as stream:
            stream.write(f"# schema: {RESULTS_SCHEMA}\n")
            writer = csv.writer(stream)
            writer.writerow(["trial_id", "theta_true", "theta_est", "delta", "failed"])
            for trial_id, truth, estimate in self.trials:
                true_text = "" if truth is None else f"{truth:.6f}"
                if estimate is None:
                    writer.writerow([trial_id, true_text, "", "", 1])
                    continue
                delta = circular_error(estimate, truth)
                writer.writerow([trial_id, true_text, f"{estimate:.6f}", f"{delta:.6f}", 0])
            if self.evaluation is not None:
                summary = " ".join(
                    f"{key}={value:.6f}" for key, value in self.evaluation.summary().items()
                )
                stream.write(f"# summary: {summary} n_failed={self.n_failed}\n")


class ExperimentResult:
    """
    MAE and accuracy per algorithm, and per deviation step for the deviation experiment.
    """

    def __init__(self, experiment: str, epsilon: float = 5.0) -> None:
        self.experiment = experiment
        self.epsilon = epsilon
        self.rows: List[ResultRow] = []

    def add(
        self,
        algorithm: str,
        step: Optional[float],
        trials: Sequence[Tuple[int, Optional[float], Optional[float]]],
    ) -> ResultRow:
        """
        Record `(trial_id, truth, estimate)` triples, where a failed trial has no estimate.

        Failed trials are excluded from the MAE and accuracy, and their count is logged.
        """
        row = ResultRow(algorithm, step, trials, self.epsilon)
        if row.n_failed:
            where = "" if step is None else f" at {step:g} m"
            logger.warning(
                "%s%s: %d of %d trials failed", algorithm, where, row.n_failed, len(row.trials)
            )
        self.rows.append(row)
        return row

    def get(self, algorithm: str, step: Optional[float] = None) -> ResultRow:
        for row in self.rows:
            if row.algorithm == algorithm and (step is None or math.isclose(row.step, step)):
                return row
        raise KeyError((algorithm, step))

    @property
    def has_steps(self) -> bool:
        return any(row.step is not None for row in self.rows)

    def write(self, output_dir: Union[str, Path]) -> List[Path]:
        """
        Write the summary table and one trial table per row, returning the paths written.
        """
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        summary = output_dir / f"{self.experiment}.csv"
        written = [summary]

        columns = ["algorithm", "mae_deg", "accuracy_pct", "n_trials", "n_failed"]
        if self.has_steps:
            columns = ["step_m"] + columns
        with open(summary, "w", newline="", encoding="utf-8") as stream:
            stream.write(f"# schema: {RESULTS_SCHEMA}\n")
            writer = csv.writer(stream)
            writer.writerow(columns)
            for row in self.rows:
                values = [row.algorithm, f"{row.mae:.6f}", f"{row.accuracy:.6f}", row.n_trials, row.n_failed]
                if self.has_steps:
                    values = [f"{row.step:.3f}"] + values
                writer.writerow(values)

        for row in self.rows:
            name = f"trials_{row.algorithm}"
            if row.step is not None:
                name += f"_{row.step:.3f}m"
            path = output_dir / f"{name}.csv"
            row.write_csv(path)
            written.append(path)
        return written

    def __repr__(self) -> str:
        return f"<{self.__class__.__name__} [{self.experiment}, {len(self.rows)} rows]>"


def _build_estimators(
    algorithms: Sequence[str], models: Mapping[str, MlpModel], c: float
) -> Dict[str, EstimatorInterface]:
    return {
        algorithm: create_estimator(algorithm, models.get(algorithm), c=c)
        for algorithm in algorithms
    }


def _estimate_all(
    estimators: Mapping[str, EstimatorInterface],
    signal: MultichannelSignal,
    geometry: ArrayGeometry,
    trial: int,
    extensions: Optional[dict] = None,
) -> Dict[str, Optional[float]]:
    estimates: Dict[str, Optional[float]] = {}
    for algorithm, estimator in estimators.items():
        known = geometry if estimator.uses_geometry else None
        try:
            estimates[algorithm] = estimator.estimate(signal, known, extensions=extensions).doa
        except TRIAL_FAILURES as exc:
            logger.info("Trial %d failed for %s: %s", trial, algorithm, exc)
            estimates[algorithm] = None
    return estimates


def _run_static(
    config: ExperimentConfig,
    experiment: str,
    algorithms: Sequence[str],
    randomize: bool,
    models: Optional[Mapping[str, MlpModel]] = None,
    extensions: Optional[dict] = None,
) -> ExperimentResult:
    models = load_models(config, algorithms) if models is None else models
    estimators = _build_estimators(algorithms, models, config.c)
    ranges = config.evaluation_ranges
    source_kind = config.evaluation_source_kind
    corpus = config.corpus()

    def run_trial(trial: int) -> Tuple[Optional[float], Dict[str, Optional[float]]]:
        rng = item_rng(config.seed, SCENE_STREAM, trial)
        truth = None
        try:
            if randomize:
                geometry = random_geometry(NUM_MICS, rng, *RANDOM_ARRAY_SIZE)
            else:
                geometry = arc_array()
            scene = sample_scene(ranges, rng, geometry, source_kind, corpus, fs=config.fs, c=config.c)
            truth = scene.ground_truth_doa
            signal = render_scene(scene, config.duration)
        except SCENE_FAILURES as exc:
            logger.info("Trial %d failed: %s", trial, exc)
            return truth, {algorithm: None for algorithm in algorithms}
        return truth, _estimate_all(estimators, signal, geometry, trial, extensions)

    kwargs = {"trials": config.trials, "algorithms": list(algorithms), "seed": config.seed}
    with Trace(f"experiments.{experiment}", extensions, kwargs) as trace:
        outcomes = run_trials(run_trial, range(config.trials), config.threads)
        result = ExperimentResult(experiment, config.epsilon)
        for algorithm in algorithms:
            result.add(
                algorithm,
                None,
                [(trial, truth, estimates[algorithm]) for trial, (truth, estimates) in enumerate(outcomes)],
            )
        trace.return_value = result
    return result


def run_randomized_experiment(
    config: ExperimentConfig,
    models: Optional[Mapping[str, MlpModel]] = None,
    extensions: Optional[dict] = None,
) -> ExperimentResult:
    """
    Evaluate every algorithm on scenes recorded by a fresh random array per trial.

    Geometry-aware algorithms are given the coordinates of each array.
    """
    return _run_static(
        config, "randomized", config.selected_algorithms, True, models, extensions
    )


def run_evaluation(
    config: ExperimentConfig,
    algorithm: str,
    randomize: bool = False,
    model: Optional[MlpModel] = None,
    extensions: Optional[dict] = None,
) -> ExperimentResult:
    """
    Evaluate a single algorithm, on the arc array or on random arrays.
    """
    models = None if model is None else {algorithm: model}
    return _run_static(config, "evaluation", [algorithm], randomize, models, extensions)


def run_deviation_experiment(
    config: ExperimentConfig,
    models: Optional[Mapping[str, MlpModel]] = None,
    extensions: Optional[dict] = None,
) -> ExperimentResult:
    """
    Evaluate every algorithm as the arc array deviates from its trained coordinates.

    Each trial renders the same scene at every deviation step, with every
    microphone moved by the step size in its own random direction.
    Geometry-aware algorithms and the model-based algorithms are given the
    deviated coordinates. The other networks only see the signals.
    """
    algorithms = config.selected_algorithms
    models = load_models(config, algorithms) if models is None else models
    estimators = _build_estimators(algorithms, models, config.c)
    ranges = config.evaluation_ranges
    source_kind = config.evaluation_source_kind
    corpus = config.corpus()
    arc = arc_array()
    steps = config.deviation_steps

    def run_trial(trial: int) -> Tuple[Optional[float], Dict[Tuple[str, int], Optional[float]]]:
        rng = item_rng(config.seed, SCENE_STREAM, trial)
        outcome: Dict[Tuple[str, int], Optional[float]] = {}
        try:
            scene = sample_scene(ranges, rng, arc, source_kind, corpus, fs=config.fs, c=config.c)
        except SCENE_FAILURES as exc:
            logger.info("Trial %d failed: %s", trial, exc)
            failed = {(algorithm, index): None for algorithm in algorithms for index in range(len(steps))}
            return None, failed
        for index, step in enumerate(steps):
            try:
                deviated = deviate_geometry(arc, step, item_rng(config.seed, DEVIATION_STREAM, trial, index))
                signal = render_scene(scene.with_geometry(deviated), config.duration)
            except SCENE_FAILURES as exc:
                logger.info("Trial %d failed at %g m: %s", trial, step, exc)
                outcome.update({(algorithm, index): None for algorithm in algorithms})
                continue
            estimates = _estimate_all(estimators, signal, deviated, trial, extensions)
            outcome.update({(algorithm, index): value for algorithm, value in estimates.items()})
        return scene.ground_truth_doa, outcome

    kwargs = {"trials": config.trials, "steps": steps, "algorithms": algorithms, "seed": config.seed}
    with Trace("experiments.deviation", extensions, kwargs) as trace:
        outcomes = run_trials(run_trial, range(config.trials), config.threads)
        result = ExperimentResult("deviation", config.epsilon)
        for index, step in enumerate(steps):
            for algorithm in algorithms:
                result.add(
                    algorithm,
                    step,
                    [
                        (trial, truth, outcome[(algorithm, index)])
                        for trial, (truth, outcome) in enumerate(outcomes)
                    ],
                )
        trace.return_value = result
    return result


def read_results_csv(path: Union[str, Path]) -> List[Dict[str, str]]:
    """
    Read a result table, skipping comment lines.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"Result file not found: {path}")
    with open(path, newline="", encoding="utf-8") as stream:
        lines = stream.read().splitlines()
    if not lines or lines[0].strip() != f"# schema: {RESULTS_SCHEMA}":
        raise SchemaMismatch(f"{path} is not a {RESULTS_SCHEMA} result file.")
    rows = [line for line in lines[1:] if line and not line.startswith("#")]
    return list(csv.DictReader(rows))


def write_plotdata(paths: Sequence[Union[str, Path]], output: Union[str, Path]) -> Path:
    """
    Collect deviation summaries into one figure-ready table with columns
    `step_m, algorithm, mae_deg, accuracy_pct`.
    """
    rows = []
    for path in paths:
        for row in read_results_csv(path):
            if "step_m" not in row:
                raise SchemaMismatch(f"{path} is not a deviation summary.")
            rows.append(row)

    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", newline="", encoding="utf-8") as stream:
        writer = csv.writer(stream)
        writer.writerow(["step_m", "algorithm", "mae_deg", "accuracy_pct"])
        for row in rows:
            writer.writerow([row["step_m"], row["algorithm"], row["mae_deg"], row["accuracy_pct"]])
    return output
