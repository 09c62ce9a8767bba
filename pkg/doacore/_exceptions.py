import contextlib
from typing import Dict, Iterator, Optional, Type

__all__ = [
    "InvalidGeometry",
    "GeometryFileError",
    "InvalidScene",
    "SceneSamplingError",
    "DegenerateScene",
    "IngestionError",
    "EmptyInput",
    "SilentFrame",
    "FeatureShapeError",
    "SampleRateMismatch",
    "NumericError",
    "TrainingFailure",
    "InvalidBatch",
    "ModelLoadError",
    "SchemaMismatch",
    "EstimationFailure",
    "ConfigurationError",
]


@contextlib.contextmanager
def map_exceptions(map: Dict[Type[Exception], Type[Exception]]) -> Iterator[None]:
    try:
        yield
    except Exception as exc:  # noqa: PIE786
        for from_exc, to_exc in map.items():
            if isinstance(exc, from_exc):
                raise to_exc(exc) from exc
        raise  # pragma: nocover


# Geometry errors


class InvalidGeometry(Exception):
    pass


class GeometryFileError(InvalidGeometry):
    pass


# Scene errors


class InvalidScene(Exception):
    pass


class SceneSamplingError(InvalidScene):
    pass


class DegenerateScene(InvalidScene):
    pass


class IngestionError(Exception):
    pass


# Feature errors


class EmptyInput(Exception):
    pass


class SilentFrame(Exception):
    pass


class FeatureShapeError(Exception):
    pass


class SampleRateMismatch(FeatureShapeError):
    pass


# Numeric errors


class NumericError(Exception):
    pass


class TrainingFailure(NumericError):
    def __init__(self, message: str, diagnostics: Optional[dict] = None) -> None:
        super().__init__(message)
        self.diagnostics = {} if diagnostics is None else diagnostics


class InvalidBatch(Exception):
    pass


class EstimationFailure(Exception):
    pass


# File and configuration errors


class ModelLoadError(Exception):
    pass


class SchemaMismatch(Exception):
    pass


class ConfigurationError(Exception):
    pass
