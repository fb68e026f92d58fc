from __future__ import annotations

import os
from abc import ABC
from abc import abstractmethod
from concurrent.futures import ThreadPoolExecutor
from typing import Any
from typing import Callable
from typing import Iterable
from typing import TypeVar

from reifenberg.config import Configuration

T = TypeVar("T")


class Executor(ABC):
    """Maps independent work items to results, preserving input order."""

    _current: Executor | None = None

    @classmethod
    def get(cls, threads: int | None = None) -> Executor:
        if cls._current is None or (threads is not None and cls._current.threads != threads):
            cls._current = cls.create(threads)
        return cls._current

    @classmethod
    def reset(cls) -> None:
        cls._current = None

    @property
    @abstractmethod
    def threads(self) -> int:  # pragma: no cover
        raise NotImplementedError()

    @abstractmethod
    def map(self, fn: Callable[[Any], T], items: Iterable[Any]) -> list[T]:  # pragma: no cover
        raise NotImplementedError()

    @staticmethod
    def create(threads: int | None = None) -> Executor:
        threads = threads or Configuration.get().settings.threads or os.cpu_count() or 1
        if threads == 1:
            return SerialExecutor()
        return ParallelExecutor(threads)


class SerialExecutor(Executor):
    @property
    def threads(self) -> int:
        return 1

    def map(self, fn: Callable[[Any], T], items: Iterable[Any]) -> list[T]:
        return [fn(item) for item in items]


class ParallelExecutor(Executor):
    """Thread pool; numpy kernels release the GIL for most of their work."""

    def __init__(self, threads: int):
        self._threads = threads

    @property
    def threads(self) -> int:
        return self._threads

    def map(self, fn: Callable[[Any], T], items: Iterable[Any]) -> list[T]:
        items = list(items)
        if len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self._threads) as executor:
            return list(executor.map(fn, items))
