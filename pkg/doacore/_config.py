from pathlib import Path
from typing import Any, Union

import yaml

from ._exceptions import ConfigurationError, InvalidScene, map_exceptions
from ._experiments import ExperimentConfig
from ._mlp import TrainConfig
from ._room import SceneRanges

__all__ = ["load_config"]


def _section(value: Any, name: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"'{name}' must be a mapping, but got {type(value).__name__}.")
    return value


def config_from_mapping(values: dict, **overrides: Any) -> ExperimentConfig:
    """
    Build an `ExperimentConfig` from parsed config values, with keyword overrides applied on top.
    """
    values = {**_section(values, "config"), **overrides}
    exc_map = {
        TypeError: ConfigurationError,
        ValueError: ConfigurationError,
        InvalidScene: ConfigurationError,
    }
    with map_exceptions(exc_map):
        if "ranges" in values:
            values["ranges"] = SceneRanges(**_section(values["ranges"], "ranges"))
        if "train" in values:
            train = _section(values["train"], "train")
            train.setdefault("seed", values.get("seed", 0))
            values["train"] = TrainConfig(**train)
        if "models" in values:
            values["models"] = _section(values["models"], "models")
        return ExperimentConfig(**values)


def load_config(path: Union[str, Path], **overrides: Any) -> ExperimentConfig:
    """
    Read an experiment configuration from a YAML file.

    ```yaml
    experiment: deviation
    trials: 100
    deviation_steps: [0.0, 0.01, 0.02, 0.03, 0.04, 0.05]
    models:
      fc-ga: models/model_geometry-aware.mlp
    ranges:
      t60: [0.13, 1.0]
    ```

    Keyword `overrides` take precedence over the file, which is how command
    line flags are applied.
    """
    path = Path(path)
    with map_exceptions({OSError: ConfigurationError, yaml.YAMLError: ConfigurationError}):
        values = yaml.safe_load(path.read_text(encoding="utf-8"))
    return config_from_mapping(values, **overrides)
