import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from ._api import ALGORITHMS, create_estimator
from ._concurrency import item_rng
from ._config import config_from_mapping, load_config
from ._exceptions import (
    ConfigurationError,
    EmptyInput,
    EstimationFailure,
    FeatureShapeError,
    IngestionError,
    InvalidBatch,
    InvalidGeometry,
    InvalidScene,
    ModelLoadError,
    NumericError,
    SchemaMismatch,
    SilentFrame,
)
from ._experiments import (
    NUM_MICS,
    RANDOM_ARRAY_SIZE,
    SCENE_STREAM,
    DatasetManifest,
    ExperimentConfig,
    generate_dataset,
    run_deviation_experiment,
    run_evaluation,
    run_randomized_experiment,
    train_from_dataset,
    write_plotdata,
)
from ._features import FeatureKind
from ._geometry import arc_array, random_geometry, read_geometry, write_geometry
from ._mlp import save_model
from ._room import MultichannelSignal, render_plane_wave, render_scene, sample_scene, synthetic_speech
from ._wav import read_multichannel_wav, write_wav

__all__ = ["main"]

logger = logging.getLogger("doacore")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (
    InvalidGeometry,
    InvalidScene,
    IngestionError,
    ModelLoadError,
    SchemaMismatch,
    EmptyInput,
    FeatureShapeError,
    InvalidBatch,
    SilentFrame,
)
NUMERIC_ERRORS = (NumericError, EstimationFailure)

MODEL_FLAGS = {
    "fc-full": "model_full",
    "fc-max": "model_max",
    "fc-ga": "model_ga",
    "fc-full-ga": "model_full_ga",
}


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigurationError(f"{self.prog}: {message}")


def _common_flags() -> argparse.ArgumentParser:
    # Defaults are suppressed, so the flags may appear before or after the subcommand.
    parser = ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    parser.add_argument("--seed", type=int, help="Global random seed.")
    parser.add_argument("--config", type=Path, help="YAML experiment configuration.")
    parser.add_argument("--out", type=Path, help="Output directory.")
    parser.add_argument("--threads", type=int, help="Worker threads for trials and samples.")
    parser.add_argument("--corpus", type=Path, help="Directory of mono 16-bit PCM speech WAV files.")
    parser.add_argument("-v", "--verbose", action="count", help="Log INFO, or DEBUG with -vv.")
    return parser


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = ArgumentParser(
        prog="doacore",
        description="Geometry-aware acoustic direction-of-arrival estimation.",
        parents=[common],
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True
    feature_kinds = [kind.value for kind in FeatureKind]

    simulate = commands.add_parser("simulate", parents=[common], help="Render one scene to WAV.")
    simulate.add_argument("--duration", type=float, default=5.0, help="Seconds to render.")
    group = simulate.add_mutually_exclusive_group()
    group.add_argument("--random-geometry", action="store_true", help="Use a random 5 mic array.")
    group.add_argument("--geometry", type=Path, help="Geometry file with one 'x y' line per mic.")
    simulate.add_argument(
        "--anechoic", action="store_true", help="Render a noise-free far-field plane wave instead."
    )

    dataset = commands.add_parser("dataset", parents=[common], help="Generate a training set.")
    dataset.add_argument("--feature", choices=feature_kinds, required=True)
    dataset.add_argument("--samples", type=int, help="Number of training samples.")

    train = commands.add_parser("train", parents=[common], help="Train a classifier.")
    train.add_argument("--feature", choices=feature_kinds, required=True)
    train.add_argument("--samples", type=int, help="Number of training samples.")
    train.add_argument("--dataset", type=Path, help="Existing dataset file to train on.")

    evaluate = commands.add_parser("eval", parents=[common], help="Evaluate a single algorithm.")
    evaluate.add_argument("--algorithm", choices=ALGORITHMS, required=True)
    evaluate.add_argument("--model", type=Path, help="Model file of a neural algorithm.")
    evaluate.add_argument("--trials", type=int, help="Number of trials.")
    evaluate.add_argument("--random-geometry", action="store_true", help="Use random arrays.")

    experiment = commands.add_parser("experiment", parents=[common], help="Run an experiment.")
    experiment.add_argument("experiment", choices=["deviation", "randomized"])
    experiment.add_argument("--trials", type=int, help="Number of trials.")
    for algorithm, dest in MODEL_FLAGS.items():
        experiment.add_argument(
            f"--{dest.replace('_', '-')}", dest=dest, type=Path, help=f"Model file for {algorithm}."
        )

    plotdata = commands.add_parser(
        "plotdata", parents=[common], help="Collect deviation summaries into one CSV."
    )
    plotdata.add_argument("inputs", nargs="+", type=Path, help="Deviation summary CSV files.")

    localize = commands.add_parser(
        "localize", parents=[common], help="Estimate the DoA of a multichannel recording."
    )
    localize.add_argument("--wav", type=Path, required=True, help="Multichannel 16-bit PCM WAV file.")
    localize.add_argument("--geometry", type=Path, help="Geometry file of the recording array.")
    localize.add_argument("--algorithm", choices=ALGORITHMS, default="srp-phat")
    localize.add_argument("--model", type=Path, help="Model file of a neural algorithm.")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _config(args: argparse.Namespace, **overrides: Any) -> ExperimentConfig:
    flags = {"seed": "seed", "out": "output_dir", "threads": "threads", "corpus": "corpus_dir"}
    for flag, key in flags.items():
        if hasattr(args, flag):
            overrides[key] = getattr(args, flag)
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if hasattr(args, "config"):
        return load_config(args.config, **overrides)
    return config_from_mapping({}, **overrides)


def _manifest(config: ExperimentConfig, kind: str) -> DatasetManifest:
    return DatasetManifest(
        num_samples=config.samples,
        kind=kind,
        seed=config.seed,
        ranges=config.ranges,
        sample_duration=config.sample_duration,
        fs=config.fs,
        c=config.c,
        eta=config.eta,
        source_kind=config.source_kind,
        corpus=config.corpus(),
    )


def _simulate(args: argparse.Namespace) -> None:
    config = _config(args)
    rng = item_rng(config.seed, SCENE_STREAM, 0)
    if args.geometry is not None:
        geometry = read_geometry(args.geometry)
    elif args.random_geometry:
        geometry = random_geometry(NUM_MICS, rng, *RANDOM_ARRAY_SIZE)
    else:
        geometry = arc_array()

    scene = sample_scene(
        config.ranges, rng, geometry, config.source_kind, config.corpus(), fs=config.fs, c=config.c
    )
    if args.anechoic:
        num_samples = int(round(args.duration * config.fs))
        source = synthetic_speech(num_samples, item_rng(scene.seed, SCENE_STREAM), fs=config.fs)
        signal = render_plane_wave(geometry, scene.ground_truth_doa, source, fs=config.fs, c=config.c)
    else:
        signal = render_scene(scene, args.duration)

    output = config.output_dir
    output.mkdir(parents=True, exist_ok=True)
    write_wav(output / "scene.wav", signal.channels, signal.fs)
    write_geometry(output / "geometry.txt", geometry)
    record = {**scene.to_record(), "duration": args.duration, "anechoic": args.anechoic}
    (output / "scene.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    print(f"Rendered a source at {scene.ground_truth_doa:g} degrees to {output / 'scene.wav'}")


def _dataset(args: argparse.Namespace) -> None:
    config = _config(args, samples=getattr(args, "samples", None))
    manifest = _manifest(config, args.feature)
    path = config.output_dir / f"dataset_{manifest.kind.value}.bin"
    generate_dataset(manifest, path, threads=config.threads)
    print(path)


def _train(args: argparse.Namespace) -> None:
    config = _config(args, samples=getattr(args, "samples", None))
    kind = FeatureKind(args.feature)
    path = args.dataset
    if path is None:
        path = config.output_dir / f"dataset_{kind.value}.bin"
        generate_dataset(_manifest(config, kind.value), path, threads=config.threads)
    model = train_from_dataset(path, config.train)
    recorded = model.metadata["feature_kind"]
    if recorded != kind.value:
        raise ConfigurationError(f"{path} holds {recorded!r} features, not {kind.value!r}.")
    output = config.output_dir / f"model_{kind.value}.mlp"
    output.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, output)
    print(output)


def _evaluate(args: argparse.Namespace) -> None:
    config = _config(args, trials=getattr(args, "trials", None))
    if args.model is not None:
        config = config.replace(models={**config.models, args.algorithm: args.model})
    result = run_evaluation(config, args.algorithm, randomize=args.random_geometry)
    result.write(config.output_dir)
    _report(result.rows)


def _experiment(args: argparse.Namespace) -> None:
    config = _config(args, experiment=args.experiment, trials=getattr(args, "trials", None))
    models = dict(config.models)
    for algorithm, dest in MODEL_FLAGS.items():
        path = getattr(args, dest, None)
        if path is not None:
            models[algorithm] = path
    config = config.replace(models=models)
    if config.experiment == "deviation":
        result = run_deviation_experiment(config)
    else:
        result = run_randomized_experiment(config)
    result.write(config.output_dir)
    _report(result.rows)


def _plotdata(args: argparse.Namespace) -> None:
    config = _config(args)
    print(write_plotdata(args.inputs, config.output_dir / "plotdata.csv"))


def _localize(args: argparse.Namespace) -> None:
    config = _config(args)
    channels = read_multichannel_wav(args.wav, fs=config.fs)
    signal = MultichannelSignal(channels, config.fs)
    geometry = None if args.geometry is None else read_geometry(args.geometry)
    estimator = create_estimator(args.algorithm, args.model, c=config.c)
    if not estimator.uses_geometry:
        geometry = None
    result = estimator.estimate(signal, geometry)
    print(f"{result.doa:.2f}")


def _report(rows: Sequence[Any]) -> None:
    for row in rows:
        step = "" if row.step is None else f"{row.step:.3f} m  "
        print(
            f"{step}{row.algorithm:<10} MAE={row.mae:6.2f} deg  "
            f"Accuracy={row.accuracy:6.2f}%  N={row.n_trials} failed={row.n_failed}"
        )


COMMANDS = {
    "simulate": _simulate,
    "dataset": _dataset,
    "train": _train,
    "eval": _evaluate,
    "experiment": _experiment,
    "plotdata": _plotdata,
    "localize": _localize,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run the `doacore` command line, returning the process exit code.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _configure_logging(getattr(args, "verbose", 0))
        COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0
