from __future__ import annotations

from pathlib import Path
from typing import Any

import dill

from reifenberg.config import Configuration


class CacheManager:
    """Stage results pickled under home/cache_path, keyed by stage name and inputs."""

    @staticmethod
    def get(key: str) -> Any:
        cache_file = CacheManager._file_for(key)
        if cache_file.exists():
            with open(cache_file, "rb") as f:
                return dill.load(f)
        return None

    @staticmethod
    def set(key: str, value: Any) -> None:
        cache_file = CacheManager._file_for(key)
        with open(cache_file, "wb") as f:
            dill.dump(value, f)

    @staticmethod
    def clear() -> int:
        removed = 0
        for entry in CacheManager._directory().glob("*.pkl"):
            entry.unlink()
            removed += 1
        return removed

    @staticmethod
    def _directory() -> Path:
        settings = Configuration.get().settings
        cache_path = Path(settings.home) / settings.cache_path
        cache_path.mkdir(parents=True, exist_ok=True)
        return cache_path

    @staticmethod
    def _file_for(key: str) -> Path:
        return CacheManager._directory() / f"{key}.pkl"
