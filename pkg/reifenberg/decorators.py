from __future__ import annotations

import hashlib
import logging
from functools import wraps
from inspect import signature
from typing import Any
from typing import Callable
from typing import TypeVar

import numpy as np

from reifenberg.cache import CacheManager
from reifenberg.config import Configuration
from reifenberg.config import config_hash
from reifenberg.context import CURRENT_CONTEXT
from reifenberg.context import RunContext
from reifenberg.encoders import write_json
from reifenberg.errors import LaboratoryError
from reifenberg.errors import StageError
from reifenberg.events import RunEvent
from reifenberg.events import RunEventType
from reifenberg.output_storage import LocalFileStorage
from reifenberg.output_storage import OutputStorage
from reifenberg.utils import make_hashable

F = TypeVar("F", bound=Callable[..., Any])

logger = logging.getLogger(__name__)


def _describe(value: Any) -> Any:
    """Stable, compact form of a stage argument for events and cache keys."""
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if isinstance(value, np.ndarray):
        digest = hashlib.sha256(np.ascontiguousarray(value).tobytes()).hexdigest()[:12]
        return f"array{list(value.shape)}:{digest}"
    if isinstance(value, (list, tuple)):
        return [_describe(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _describe(v) for k, v in value.items()}
    return type(value).__name__


def _summary(value: Any) -> Any:
    if hasattr(value, "to_dict"):
        return value.to_dict()
    if isinstance(value, (list, tuple)):
        return {"items": len(value)}
    return None


class stage:
    """
    One step of a pipeline.

    Inside a running pipeline the call is recorded as STAGE_STARTED / STAGE_COMPLETED
    events; failures are wrapped in a StageError naming the stage. With ``cache`` the
    result is pickled under a key made of the configuration hash and the arguments.
    """

    @staticmethod
    def with_options(name: str | None = None, cache: bool = False) -> Callable[[F], stage]:
        def wrapper(func: F) -> stage:
            return stage(func=func, name=name, cache=cache)

        return wrapper

    def __init__(self, func: F, name: str | None = None, cache: bool = False):
        self._func = func
        self.name = name if name else func.__name__
        self.cache = cache
        wraps(func)(self)

    def __get__(self, instance, owner):
        return lambda *args, **kwargs: self(
            *(args if instance is None else (instance,) + args),
            **kwargs,
        )

    def __call__(self, *args, **kwargs) -> Any:
        ctx = CURRENT_CONTEXT.get()
        arguments = self.__arguments(args, kwargs)
        stage_id = self.__stage_id(arguments)

        if ctx is not None:
            ctx.events.append(
                RunEvent(RunEventType.STAGE_STARTED, stage_id, self.name, arguments),
            )

        try:
            output = self.__execute(stage_id, args, kwargs)
        except Exception as ex:
            if ctx is not None:
                ctx.events.append(RunEvent(RunEventType.STAGE_FAILED, stage_id, self.name, ex))
            if isinstance(ex, StageError):
                raise
            raise StageError(self.name, ex) from ex

        if ctx is not None:
            ctx.events.append(
                RunEvent(RunEventType.STAGE_COMPLETED, stage_id, self.name, _summary(output)),
            )
        return output

    def __execute(self, stage_id: str, args, kwargs) -> Any:
        if self.cache:
            cached = CacheManager.get(stage_id)
            if cached is not None:
                logger.debug("Stage '%s' served from cache %s", self.name, stage_id)
                return cached
        output = self._func(*args, **kwargs)
        if self.cache:
            CacheManager.set(stage_id, output)
        return output

    def __arguments(self, args, kwargs) -> dict[str, Any]:
        try:
            bound = signature(self._func).bind(*args, **kwargs)
        except TypeError:
            return _describe({"args": list(args), **kwargs})
        bound.apply_defaults()
        return {k: _describe(v) for k, v in bound.arguments.items() if k != "self"}

    def __stage_id(self, arguments: dict[str, Any]) -> str:
        settings = Configuration.get().settings
        payload = f"{config_hash(settings)}:{self.name}:{make_hashable(arguments)}"
        return f"{self.name}_{hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]}"


class pipeline:
    """A sequence of stages run inside its own RunContext; the manifest is always written."""

    @staticmethod
    def with_options(
        name: str | None = None,
        output_storage: OutputStorage | None = None,
    ) -> Callable[[F], pipeline]:
        def wrapper(func: F) -> pipeline:
            return pipeline(func=func, name=name, output_storage=output_storage)

        return wrapper

    def __init__(
        self,
        func: F,
        name: str | None = None,
        output_storage: OutputStorage | None = None,
    ):
        self._func = func
        self.name = name if name else func.__name__
        self.output_storage = output_storage
        wraps(func)(self)

    def run(self, **kwargs) -> RunContext:
        settings = Configuration.get().settings
        digest = config_hash(settings)
        ctx = RunContext(self.name, settings.model_dump(mode="json"), digest[:16])
        ctx.measured("config_hash", digest)
        ctx.measured("seed", settings.seed)
        storage = self.output_storage or LocalFileStorage()

        token = CURRENT_CONTEXT.set(ctx)
        started = RunEvent(RunEventType.PIPELINE_STARTED, ctx.run_id, self.name, _describe(kwargs))
        ctx.events.append(started)
        try:
            output = self._func(ctx, storage, **kwargs)
            ctx.events.append(
                RunEvent(RunEventType.PIPELINE_COMPLETED, ctx.run_id, self.name, _summary(output)),
            )
        except Exception as ex:
            message = ex.message if isinstance(ex, LaboratoryError) and ex.message else str(ex)
            logger.error("Pipeline '%s' failed: %s", self.name, message)
            stage_name = ex.stage if isinstance(ex, StageError) else None
            ctx.measured("failure", {"stage": stage_name, "message": message})
            ctx.events.append(RunEvent(RunEventType.PIPELINE_FAILED, ctx.run_id, self.name, ex))
        finally:
            CURRENT_CONTEXT.reset(token)
            self.__write_manifest(ctx, storage)
        return ctx

    def __call__(self, **kwargs) -> RunContext:
        return self.run(**kwargs)

    @staticmethod
    def __write_manifest(ctx: RunContext, storage: OutputStorage) -> None:
        manifest = ctx.manifest()
        storage.write("manifest", "manifest.json", lambda p: write_json(p, manifest.to_dict()))
