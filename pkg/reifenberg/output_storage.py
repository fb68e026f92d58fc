from __future__ import annotations

import hashlib
from abc import ABC
from abc import abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from reifenberg.config import Configuration


@dataclass
class OutputReference:
    """
    A file produced by a run.

    Attributes:
        kind (str): What the file holds, e.g. "mesh", "balls" or "estimates".
        path (str): Location relative to the storage root.
        sha256 (str): Digest of the file contents, recorded in the run manifest.
    """

    kind: str
    path: str
    sha256: str

    def to_dict(self) -> dict:
        return {"kind": self.kind, "path": self.path, "sha256": self.sha256}


class OutputStorage(ABC):
    @abstractmethod
    def write(
        self,
        kind: str,
        name: str,
        writer: Callable[[Path], None],
    ) -> OutputReference:  # pragma: no cover
        """
        Writes a file through ``writer`` and returns its reference.

        Args:
            kind (str): Category of the output.
            name (str): File name relative to the storage root.
            writer (Callable[[Path], None]): Writes the content to the given path.
        """
        raise NotImplementedError()

    @abstractmethod
    def resolve(self, reference: OutputReference) -> Path:  # pragma: no cover
        raise NotImplementedError()

    @abstractmethod
    def verify(self, reference: OutputReference) -> bool:  # pragma: no cover
        """True when the stored file still has the recorded digest."""
        raise NotImplementedError()


class LocalFileStorage(OutputStorage):
    def __init__(self, base_path: str | Path | None = None):
        settings = Configuration.get().settings
        self.base_path = Path(base_path or settings.output_dir)
        self.base_path.mkdir(parents=True, exist_ok=True)

    def write(self, kind: str, name: str, writer: Callable[[Path], None]) -> OutputReference:
        path = self.base_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(path)
        return OutputReference(kind=kind, path=name, sha256=digest(path))

    def resolve(self, reference: OutputReference) -> Path:
        return self.base_path / reference.path

    def verify(self, reference: OutputReference) -> bool:
        path = self.resolve(reference)
        return path.exists() and digest(path) == reference.sha256


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()
