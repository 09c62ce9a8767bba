import logging
from types import TracebackType
from typing import Any, Optional, Type

logger = logging.getLogger("doacore.trace")


class Trace:
    """
    Reports the start and outcome of a unit of work.

    Events are passed to the optional `extensions["trace"]` callback, as
    `trace(event_name, info)`, and are logged to `doacore.trace` at DEBUG level.
    """

    def __init__(
        self, name: str, extensions: Optional[dict] = None, kwargs: Optional[dict] = None
    ) -> None:
        self.name = name
        self.trace = None if extensions is None else extensions.get("trace")
        self.debug = logger.isEnabledFor(logging.DEBUG)
        self.kwargs = kwargs or {}
        self.return_value: Any = None

    def emit(self, name: str, info: dict) -> None:
        if self.trace is not None:
            self.trace(name, info)
        if self.debug:
            if info:
                args = " ".join(f"{key}={value!r}" for key, value in info.items())
                logger.debug(f"{name} {args}")
            else:
                logger.debug(name)

    def __enter__(self) -> "Trace":
        if self.trace is not None or self.debug:
            self.emit(f"{self.name}.started", self.kwargs)
        return self

    def __exit__(
        self,
        exc_type: Type[BaseException] = None,
        exc_value: BaseException = None,
        traceback: TracebackType = None,
    ) -> None:
        if self.trace is not None or self.debug:
            if exc_value is None:
                info = {"return_value": self.return_value}
                self.emit(f"{self.name}.complete", info)
            else:
                info = {"exception": exc_value}
                self.emit(f"{self.name}.failed", info)
