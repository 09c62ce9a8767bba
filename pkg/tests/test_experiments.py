import csv
import math

import numpy as np
import pytest

import doacore

FAST_RANGES = doacore.SceneRanges(t60=(0.15, 0.25))


def small_manifest(kind="max", num_samples=6, seed=0):
    return doacore.DatasetManifest(
        num_samples=num_samples,
        kind=kind,
        seed=seed,
        ranges=FAST_RANGES,
        sample_duration=0.3,
    )


def small_config(tmp_path, **kwargs):
    values = {
        "trials": 2,
        "deviation_steps": (0.0, 0.02),
        "t60": 0.2,
        "snr_db": 20.0,
        "duration": 0.5,
        "seed": 3,
        "output_dir": tmp_path / "results",
    }
    values.update(kwargs)
    return doacore.ExperimentConfig(**values)


def biased_model(kind, input_size, target_class, tau_max=None):
    architecture = doacore.MlpArchitecture(input_size=input_size, hidden=(4,), dropout_rate=0.0)
    weights = [np.zeros((input_size, 4)), np.zeros((4, 72))]
    biases = [np.zeros(4), np.zeros(72)]
    biases[1][target_class] = 5.0
    metadata = {"feature_kind": kind}
    if tau_max is not None:
        metadata["tau_max"] = tau_max
    return doacore.MlpModel(architecture, weights, biases, metadata)


def neural_models():
    return {
        "fc-full": biased_model("full", 280, 0, tau_max=14),
        "fc-max": biased_model("max", 10, 0, tau_max=14),
        "fc-ga": biased_model("geometry-aware", 20, 0),
    }


# Configuration


def test_experiment_config_defaults():
    config = doacore.ExperimentConfig()
    assert config.experiment == "randomized"
    assert config.deviation_steps == [0.0, 0.01, 0.02, 0.03, 0.04, 0.05]
    assert config.selected_algorithms == ["srp-phat", "music", "fc-ga"]
    assert config.evaluation_source_kind is doacore.SourceKind.SYNTHETIC_SPEECH
    assert config.evaluation_ranges.t60 == (0.5, 0.5)
    assert config.evaluation_ranges.snr_db == (20.0, 20.0)
    assert config.train.seed == 0

    config = doacore.ExperimentConfig(experiment="deviation")
    assert config.selected_algorithms == ["fc-full", "fc-max", "fc-ga", "srp-phat", "music"]


@pytest.mark.parametrize(
    "kwargs",
    [
        {"experiment": "ablation"},
        {"trials": 0},
        {"deviation_steps": [0.02, 0.01]},
        {"deviation_steps": [-0.01, 0.0]},
        {"deviation_steps": []},
        {"algorithms": ["beamformer"]},
        {"threads": 0},
        {"samples": 0},
    ],
)
def test_experiment_config_with_invalid_values(kwargs):
    with pytest.raises(doacore.ConfigurationError):
        doacore.ExperimentConfig(**kwargs)


def test_experiment_config_replace():
    config = doacore.ExperimentConfig(seed=7)
    replaced = config.replace(trials=5)
    assert replaced.trials == 5
    assert replaced.seed == 7
    assert config.trials == 100
    with pytest.raises(doacore.ConfigurationError):
        config.replace(repetitions=5)


def test_experiment_config_corpus(tmp_path):
    assert doacore.ExperimentConfig().corpus() == []

    config = doacore.ExperimentConfig(corpus_dir=tmp_path / "missing")
    with pytest.raises(doacore.IngestionError):
        config.corpus()

    config = doacore.ExperimentConfig(corpus_dir=tmp_path)
    with pytest.raises(doacore.IngestionError):
        config.corpus()

    (tmp_path / "speaker").mkdir()
    (tmp_path / "speaker" / "b.wav").write_bytes(b"")
    (tmp_path / "a.wav").write_bytes(b"")
    assert config.corpus() == [str(tmp_path / "a.wav"), str(tmp_path / "speaker" / "b.wav")]
    assert config.evaluation_source_kind is doacore.SourceKind.SPEECH_WAV


def test_load_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        "experiment: deviation\n"
        "trials: 10\n"
        "deviation_steps: [0.0, 0.05]\n"
        "seed: 4\n"
        "models:\n"
        "  fc-ga: models/model_geometry-aware.mlp\n"
        "ranges:\n"
        "  t60: [0.2, 0.4]\n"
        "train:\n"
        "  batch_size: 64\n"
    )
    config = doacore.load_config(path, trials=3)
    assert config.experiment == "deviation"
    assert config.trials == 3
    assert config.deviation_steps == [0.0, 0.05]
    assert config.models["fc-ga"].name == "model_geometry-aware.mlp"
    assert config.ranges.t60 == (0.2, 0.4)
    assert config.train.batch_size == 64
    assert config.train.seed == 4


def test_load_config_with_invalid_files(tmp_path):
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_config(tmp_path / "missing.yaml")

    path = tmp_path / "config.yaml"
    path.write_text("trials: [1, 2\n")
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_config(path)

    path.write_text("repetitions: 5\n")
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_config(path)

    path.write_text("ranges: 5\n")
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_config(path)

    path.write_text("ranges:\n  t60: [1.0, 0.2]\n")
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_config(path)


def test_load_empty_config(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("")
    config = doacore.load_config(path)
    assert config.trials == 100


# Dataset manifests


def test_dataset_manifest():
    manifest = small_manifest("max")
    assert manifest.geometry_policy == "fixed-arc"
    assert not manifest.random_geometry
    assert manifest.tau_max == 14
    assert manifest.feature_size == 10

    manifest = small_manifest("full-geometry-aware")
    assert manifest.geometry_policy == "random-per-sample"
    assert manifest.tau_max == 18
    assert manifest.feature_size == 370

    assert small_manifest("full").feature_size == 280
    assert small_manifest("geometry-aware").feature_size == 20


def test_dataset_manifest_record():
    manifest = small_manifest("geometry-aware", seed=9)
    record = manifest.to_record()
    assert doacore.DatasetManifest.from_record(record).to_record() == record


def test_dataset_manifest_with_invalid_values():
    with pytest.raises(doacore.ConfigurationError):
        doacore.DatasetManifest(10, "max", geometry_policy="random-per-sample")
    with pytest.raises(doacore.ConfigurationError):
        doacore.DatasetManifest(10, "geometry-aware", geometry_policy="fixed-arc")
    with pytest.raises(doacore.ConfigurationError):
        doacore.DatasetManifest(0, "max")
    with pytest.raises(doacore.SchemaMismatch):
        doacore.DatasetManifest(10, "max", schema_version=2)


# Datasets


def test_generate_and_load_dataset(tmp_path):
    manifest = small_manifest("max")
    events = []
    extensions = {"trace": lambda name, info: events.append(name)}
    path = doacore.generate_dataset(manifest, tmp_path / "dataset.bin", extensions=extensions)
    assert events == ["experiments.generate_dataset.started", "experiments.generate_dataset.complete"]

    found, dataset = doacore.load_dataset(path, manifest)
    assert found.to_record() == manifest.to_record()
    assert dataset.features.shape == (6, 10)
    assert np.all((dataset.labels >= 0) & (dataset.labels < 72))
    assert np.all(np.abs(dataset.features) <= 14.0)


def test_dataset_is_independent_of_threads(tmp_path):
    manifest = small_manifest("max")
    first = doacore.generate_dataset(manifest, tmp_path / "one.bin", threads=1)
    second = doacore.generate_dataset(manifest, tmp_path / "three.bin", threads=3, chunk_size=4)
    assert first.read_bytes() == second.read_bytes()


def test_dataset_depends_on_seed(tmp_path):
    first = doacore.generate_dataset(small_manifest(seed=0), tmp_path / "a.bin")
    second = doacore.generate_dataset(small_manifest(seed=1), tmp_path / "b.bin")
    _, a = doacore.load_dataset(first)
    _, b = doacore.load_dataset(second)
    assert not np.array_equal(a.features, b.features)


def test_dataset_generation_resumes(tmp_path):
    manifest = small_manifest("max")
    path = doacore.generate_dataset(manifest, tmp_path / "dataset.bin")
    data = path.read_bytes()
    record_size = (1 + manifest.feature_size) * 8

    # Three whole records and part of a fourth are missing.
    path.write_bytes(data[: len(data) - 3 * record_size - 40])
    doacore.generate_dataset(manifest, path)
    assert path.read_bytes() == data


def test_dataset_generation_with_other_manifest(tmp_path):
    path = doacore.generate_dataset(small_manifest(seed=0), tmp_path / "dataset.bin")
    with pytest.raises(doacore.SchemaMismatch):
        doacore.generate_dataset(small_manifest(seed=1), path)
    with pytest.raises(doacore.SchemaMismatch):
        doacore.load_dataset(path, small_manifest(seed=1))


def test_load_incomplete_dataset(tmp_path):
    manifest = small_manifest("max")
    path = doacore.generate_dataset(manifest, tmp_path / "dataset.bin")
    path.write_bytes(path.read_bytes()[:-88])
    with pytest.raises(doacore.SchemaMismatch):
        doacore.load_dataset(path)


def test_load_invalid_dataset(tmp_path):
    with pytest.raises(doacore.IngestionError):
        doacore.load_dataset(tmp_path / "missing.bin")
    path = tmp_path / "dataset.bin"
    path.write_bytes(b"not a dataset")
    with pytest.raises(doacore.SchemaMismatch):
        doacore.load_dataset(path)


def test_geometry_aware_dataset_carries_coordinates(tmp_path):
    manifest = small_manifest("geometry-aware", num_samples=4)
    path = doacore.generate_dataset(manifest, tmp_path / "dataset.bin")
    _, dataset = doacore.load_dataset(path)
    assert dataset.features.shape == (4, 20)
    xs, ys = dataset.features[:, 10:15], dataset.features[:, 15:20]
    assert np.allclose(xs.mean(axis=1), 0.0)
    assert np.allclose(ys.mean(axis=1), 0.0)
    # Every sample is recorded by its own random array.
    assert not np.allclose(xs[0], xs[1])


# Training


def test_train_from_dataset(tmp_path):
    manifest = small_manifest("max")
    path = doacore.generate_dataset(manifest, tmp_path / "dataset.bin")
    config = doacore.TrainConfig(batch_size=4, max_epochs=2, patience=1)
    model = doacore.train_from_dataset(path, config)

    assert model.architecture.layer_sizes == [10, 1024, 1024, 1024, 1024, 72]
    assert model.metadata["feature_kind"] == "max"
    assert model.metadata["tau_max"] == 14
    assert model.metadata["samples"] == 6
    assert model.metadata["dataset_seed"] == 0
    assert model.metadata["epochs"] <= 2

    model_path = tmp_path / "model.mlp"
    doacore.save_model(model, model_path)
    estimate = doacore.estimate(
        doacore.render_plane_wave(doacore.arc_array(), 90.0, np.random.default_rng(0).standard_normal(2400)),
        algorithm="fc-max",
        model=model_path,
    )
    assert 0.0 <= estimate.doa < 360.0


def test_load_models(tmp_path):
    config = doacore.ExperimentConfig(algorithms=["srp-phat", "fc-ga"])
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_models(config, config.selected_algorithms)

    config = config.replace(models={"fc-ga": tmp_path / "missing.mlp"})
    with pytest.raises(doacore.ConfigurationError):
        doacore.load_models(config, config.selected_algorithms)

    doacore.save_model(neural_models()["fc-ga"], tmp_path / "ga.mlp")
    config = config.replace(models={"fc-ga": tmp_path / "ga.mlp"})
    models = doacore.load_models(config, config.selected_algorithms)
    assert list(models) == ["fc-ga"]
    assert models["fc-ga"].metadata["feature_kind"] == "geometry-aware"


# Results


def test_experiment_result_with_failed_trials(tmp_path):
    result = doacore.ExperimentResult("randomized")
    row = result.add("srp-phat", None, [(0, 10.0, 12.0), (1, 20.0, None), (2, 350.0, 5.0)])
    assert row.n_trials == 2
    assert row.n_failed == 1
    assert row.mae == pytest.approx(8.5)
    assert row.accuracy == pytest.approx(50.0)

    failed = result.add("music", None, [(0, 10.0, None)])
    assert failed.n_trials == 0
    assert math.isnan(failed.mae)
    assert result.get("music") is failed
    with pytest.raises(KeyError):
        result.get("fc-ga")

    written = result.write(tmp_path)
    assert [path.name for path in written] == [
        "randomized.csv",
        "trials_srp-phat.csv",
        "trials_music.csv",
    ]
    rows = doacore.read_results_csv(tmp_path / "randomized.csv")
    assert rows[0] == {
        "algorithm": "srp-phat",
        "mae_deg": "8.500000",
        "accuracy_pct": "50.000000",
        "n_trials": "2",
        "n_failed": "1",
    }
    assert rows[1]["mae_deg"] == "nan"

    trials = doacore.read_results_csv(tmp_path / "trials_srp-phat.csv")
    assert [row["failed"] for row in trials] == ["0", "1", "0"]
    assert trials[1] == {
        "trial_id": "1",
        "theta_true": "20.000000",
        "theta_est": "",
        "delta": "",
        "failed": "1",
    }
    assert trials[2]["delta"] == "15.000000"
    summary = (tmp_path / "trials_srp-phat.csv").read_text().splitlines()[-1]
    assert summary.startswith("# summary: n_trials=2.000000")
    assert summary.endswith("n_failed=1")

    trials = doacore.read_results_csv(tmp_path / "trials_music.csv")
    assert [row["failed"] for row in trials] == ["1"]
    assert "# summary" not in (tmp_path / "trials_music.csv").read_text()


def test_read_results_csv_without_schema(tmp_path):
    path = tmp_path / "results.csv"
    path.write_text("algorithm,mae_deg\nsrp-phat,1.0\n")
    with pytest.raises(doacore.SchemaMismatch):
        doacore.read_results_csv(path)
    with pytest.raises(doacore.IngestionError):
        doacore.read_results_csv(tmp_path / "missing.csv")


def test_write_plotdata(tmp_path):
    result = doacore.ExperimentResult("deviation")
    result.add("srp-phat", 0.0, [(0, 10.0, 10.0)])
    result.add("srp-phat", 0.01, [(0, 10.0, 16.0)])
    result.write(tmp_path / "a")

    output = doacore.write_plotdata([tmp_path / "a" / "deviation.csv"], tmp_path / "plotdata.csv")
    with open(output, newline="") as stream:
        rows = list(csv.reader(stream))
    assert rows == [
        ["step_m", "algorithm", "mae_deg", "accuracy_pct"],
        ["0.000", "srp-phat", "0.000000", "100.000000"],
        ["0.010", "srp-phat", "6.000000", "0.000000"],
    ]


def test_write_plotdata_requires_steps(tmp_path):
    result = doacore.ExperimentResult("randomized")
    result.add("srp-phat", None, [(0, 10.0, 10.0)])
    result.write(tmp_path)
    with pytest.raises(doacore.SchemaMismatch):
        doacore.write_plotdata([tmp_path / "randomized.csv"], tmp_path / "plotdata.csv")


# Experiments


def test_run_evaluation(tmp_path):
    config = small_config(tmp_path)
    result = doacore.run_evaluation(config, "srp-phat")
    row = result.get("srp-phat")
    assert row.n_trials + row.n_failed == 2
    assert not result.has_steps

    written = result.write(config.output_dir)
    assert written[0].name == "evaluation.csv"
    rows = doacore.read_results_csv(written[0])
    assert list(rows[0]) == ["algorithm", "mae_deg", "accuracy_pct", "n_trials", "n_failed"]


def test_run_evaluation_of_neural_algorithm(tmp_path):
    config = small_config(tmp_path)
    model = neural_models()["fc-ga"]
    result = doacore.run_evaluation(config, "fc-ga", randomize=True, model=model)
    row = result.get("fc-ga")
    assert row.n_trials == 2
    assert list(row.evaluation.estimates) == [0.0, 0.0]


def test_run_randomized_experiment(tmp_path):
    config = small_config(tmp_path)
    events = []
    extensions = {"trace": lambda name, info: events.append(name)}
    result = doacore.run_randomized_experiment(
        config, models={"fc-ga": neural_models()["fc-ga"]}, extensions=extensions
    )
    assert [row.algorithm for row in result.rows] == ["srp-phat", "music", "fc-ga"]
    assert events[0] == "experiments.randomized.started"
    assert events[-1] == "experiments.randomized.complete"
    assert "estimator.fc-ga.complete" in events


def test_run_deviation_experiment(tmp_path):
    config = small_config(tmp_path, experiment="deviation")
    result = doacore.run_deviation_experiment(config, models=neural_models())
    assert len(result.rows) == 10
    assert result.has_steps
    for step in (0.0, 0.02):
        for algorithm in config.selected_algorithms:
            row = result.get(algorithm, step)
            assert row.n_trials + row.n_failed == 2

    written = result.write(config.output_dir)
    assert written[0].name == "deviation.csv"
    assert (config.output_dir / "trials_srp-phat_0.020m.csv").exists()
    rows = doacore.read_results_csv(written[0])
    assert [row["step_m"] for row in rows] == ["0.000"] * 5 + ["0.020"] * 5


def test_deviation_experiment_is_independent_of_threads(tmp_path):
    models = neural_models()
    first = small_config(tmp_path / "one", experiment="deviation", algorithms=["srp-phat", "fc-max"])
    second = first.replace(threads=2, output_dir=tmp_path / "two")
    doacore.run_deviation_experiment(first, models=models).write(first.output_dir)
    doacore.run_deviation_experiment(second, models=models).write(second.output_dir)
    for name in ("deviation.csv", "trials_srp-phat_0.000m.csv", "trials_srp-phat_0.020m.csv"):
        assert (first.output_dir / name).read_text() == (second.output_dir / name).read_text()


def failing_first_scene(monkeypatch):
    """
    Make the first scene sampled in a run fail.
    """
    sample_scene = doacore._experiments.sample_scene
    calls = []

    def sample_or_fail(*args, **kwargs):
        calls.append(None)
        if len(calls) == 1:
            raise doacore.SceneSamplingError("No feasible source position.")
        return sample_scene(*args, **kwargs)

    monkeypatch.setattr("doacore._experiments.sample_scene", sample_or_fail)


def test_run_evaluation_records_failed_scene(tmp_path, monkeypatch):
    failing_first_scene(monkeypatch)
    config = small_config(tmp_path, trials=3)
    result = doacore.run_evaluation(config, "srp-phat")
    row = result.get("srp-phat")
    assert row.n_failed >= 1
    assert row.n_trials + row.n_failed == 3
    assert row.trials[0] == (0, None, None)

    result.write(config.output_dir)
    trials = doacore.read_results_csv(config.output_dir / "trials_srp-phat.csv")
    assert len(trials) == 3
    assert trials[0] == {
        "trial_id": "0",
        "theta_true": "",
        "theta_est": "",
        "delta": "",
        "failed": "1",
    }
    assert sum(row["failed"] == "1" for row in trials) == row.n_failed


def test_deviation_experiment_records_failed_scene(tmp_path, monkeypatch):
    failing_first_scene(monkeypatch)
    config = small_config(tmp_path, experiment="deviation", trials=3, algorithms=["srp-phat"])
    result = doacore.run_deviation_experiment(config, models={})
    for step in (0.0, 0.02):
        row = result.get("srp-phat", step)
        assert row.trials[0] == (0, None, None)
        assert row.n_trials + row.n_failed == 3


def test_experiment_requires_models(tmp_path):
    config = small_config(tmp_path, experiment="deviation")
    with pytest.raises(doacore.ConfigurationError):
        doacore.run_deviation_experiment(config)


def test_randomized_baselines_accuracy(tmp_path):
    """
    Model-based baselines on random arrays in reverberant, noisy rooms.
    """
    config = doacore.ExperimentConfig(
        experiment="randomized",
        trials=200,
        t60=0.5,
        snr_db=20.0,
        duration=5.0,
        seed=3,
        algorithms=["srp-phat", "music"],
        threads=4,
        output_dir=tmp_path,
    )
    result = doacore.run_randomized_experiment(config, models={})
    srp = result.get("srp-phat")
    assert srp.mae <= 3.44
    assert srp.accuracy >= 88.5
    music = result.get("music")
    assert music.mae <= 3.69
    assert music.accuracy >= 78.0
