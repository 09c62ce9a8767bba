import csv
import json

import numpy as np
import pytest

import doacore
from doacore._cli import main

FAST_CONFIG = """\
duration: 1.0
t60: 0.2
sample_duration: 0.3
ranges:
  t60: [0.15, 0.25]
train:
  batch_size: 2
  max_epochs: 1
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(FAST_CONFIG)
    return str(path)


# Usage errors


def test_missing_command(capsys):
    assert main([]) == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_flag():
    assert main(["simulate", "--loudness", "11"]) == 1


def test_conflicting_geometry_flags(tmp_path):
    assert main(["simulate", "--random-geometry", "--geometry", str(tmp_path / "g.txt")]) == 1


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_eval_without_model(tmp_path):
    assert main(["eval", "--algorithm", "fc-ga", "--out", str(tmp_path)]) == 1


# Data errors


def test_localize_missing_recording(tmp_path):
    assert main(["localize", "--wav", str(tmp_path / "missing.wav")]) == 2


def test_simulate_with_invalid_geometry_file(tmp_path):
    path = tmp_path / "geometry.txt"
    path.write_text("0.0 0.0\nnot a number\n")
    assert main(["simulate", "--geometry", str(path), "--out", str(tmp_path)]) == 2


def test_train_on_a_single_sample(tmp_path, config_path, capsys):
    out = tmp_path / "out"
    common = ["--config", config_path, "--out", str(out), "--samples", "1"]
    assert main(["dataset", "--feature", "max", *common]) == 0
    dataset = str(out / "dataset_max.bin")
    assert main(["train", "--feature", "max", "--dataset", dataset, *common]) == 2
    assert "error:" in capsys.readouterr().err


def test_localize_silent_frame(tmp_path, monkeypatch):
    class SilentEstimator:
        uses_geometry = False

        def estimate(self, signal, geometry=None):
            raise doacore.SilentFrame("Frame 0 is silent.")

    monkeypatch.setattr("doacore._cli.create_estimator", lambda *args, **kwargs: SilentEstimator())
    path = tmp_path / "recording.wav"
    doacore.write_wav(path, np.random.default_rng(0).standard_normal((5, 4000)), 8000)
    assert main(["localize", "--wav", str(path)]) == 2


# Numeric errors


def test_localize_silent_recording(tmp_path, capsys):
    path = tmp_path / "silent.wav"
    doacore.write_wav(path, np.zeros((5, 4000)), 8000)
    geometry = tmp_path / "geometry.txt"
    doacore.write_geometry(geometry, doacore.arc_array())
    args = ["localize", "--wav", str(path), "--geometry", str(geometry), "--algorithm", "srp-phat"]
    assert main(args) == 3
    assert "silent" in capsys.readouterr().err


# Commands


def test_simulate(tmp_path, config_path, capsys):
    out = tmp_path / "out"
    args = ["simulate", "--config", config_path, "--out", str(out), "--seed", "1", "--duration", "0.5"]
    assert main(args) == 0
    assert "Rendered a source at" in capsys.readouterr().out

    channels = doacore.read_multichannel_wav(out / "scene.wav")
    assert channels.shape == (5, 4000)
    assert doacore.read_geometry(out / "geometry.txt") == doacore.arc_array()
    record = json.loads((out / "scene.json").read_text())
    assert record["schema"] == "doacore.scene/1"
    assert record["duration"] == 0.5
    assert record["anechoic"] is False


def test_simulate_is_seeded(tmp_path, config_path):
    for name in ("a", "b"):
        args = ["simulate", "--config", config_path, "--out", str(tmp_path / name), "--duration", "0.5"]
        assert main(args) == 0
    assert (tmp_path / "a" / "scene.wav").read_bytes() == (tmp_path / "b" / "scene.wav").read_bytes()


def test_simulate_and_localize(tmp_path, capsys):
    out = tmp_path / "out"
    args = ["--seed", "5", "simulate", "--anechoic", "--duration", "1.0", "--out", str(out)]
    assert main(args) == 0
    record = json.loads((out / "scene.json").read_text())
    assert record["anechoic"] is True
    capsys.readouterr()

    args = ["localize", "--wav", str(out / "scene.wav"), "--geometry", str(out / "geometry.txt")]
    assert main(args) == 0
    doa = float(capsys.readouterr().out.strip())
    assert doacore.circular_error(doa, record["ground_truth_doa"]) <= 5.0


def test_localize_without_geometry(tmp_path):
    signal = doacore.render_plane_wave(
        doacore.arc_array(), 45.0, np.random.default_rng(0).standard_normal(4000)
    )
    path = tmp_path / "recording.wav"
    doacore.write_wav(path, signal.channels, signal.fs)
    assert main(["localize", "--wav", str(path)]) == 2


def test_dataset_and_train(tmp_path, config_path):
    out = tmp_path / "out"
    common = ["--config", config_path, "--out", str(out), "--samples", "4"]
    assert main(["dataset", "--feature", "max", *common]) == 0
    assert (out / "dataset_max.bin").exists()

    dataset = str(out / "dataset_max.bin")
    assert main(["train", "--feature", "max", "--dataset", dataset, *common]) == 0
    model = doacore.load_model(out / "model_max.mlp")
    assert model.metadata["feature_kind"] == "max"
    assert model.metadata["epochs"] == 1

    assert main(["train", "--feature", "full", "--dataset", dataset, *common]) == 1


def test_eval(tmp_path, config_path, capsys):
    out = tmp_path / "out"
    args = ["eval", "--algorithm", "srp-phat", "--trials", "2", "--config", config_path, "--out", str(out)]
    assert main(args) == 0
    assert "srp-phat" in capsys.readouterr().out
    rows = doacore.read_results_csv(out / "evaluation.csv")
    assert rows[0]["algorithm"] == "srp-phat"
    assert int(rows[0]["n_trials"]) + int(rows[0]["n_failed"]) == 2


def test_plotdata(tmp_path):
    result = doacore.ExperimentResult("deviation")
    result.add("music", 0.0, [(0, 90.0, 92.0)])
    result.add("music", 0.05, [(0, 90.0, 120.0)])
    result.write(tmp_path / "music")

    out = tmp_path / "out"
    assert main(["plotdata", str(tmp_path / "music" / "deviation.csv"), "--out", str(out)]) == 0
    with open(out / "plotdata.csv", newline="") as stream:
        rows = list(csv.DictReader(stream))
    assert [(row["step_m"], row["mae_deg"]) for row in rows] == [
        ("0.000", "2.000000"),
        ("0.050", "30.000000"),
    ]


def test_plotdata_of_randomized_summary(tmp_path):
    result = doacore.ExperimentResult("randomized")
    result.add("music", None, [(0, 90.0, 92.0)])
    result.write(tmp_path)
    assert main(["plotdata", str(tmp_path / "randomized.csv"), "--out", str(tmp_path)]) == 2
