from __future__ import annotations

import csv
from pathlib import Path
from typing import Any
from typing import Iterable
from typing import Sequence

import numpy as np

from reifenberg.errors import LaboratoryError
from reifenberg.geometry import BoundaryMesh
from reifenberg.utils import to_json


def format_number(value: Any) -> str:
    """Shortest round-trip text of a number; written files are byte-reproducible."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return "" if value is None else str(value)


def write_off(mesh: BoundaryMesh, path: Path) -> None:
    """
    OFF text of a boundary mesh.

    Planar meshes keep their segments as two-vertex faces and get a zero third
    coordinate, so the face arity tells the reader the ambient dimension.
    """
    vertices = mesh.vertices
    if mesh.dimension == 2:
        vertices = np.column_stack([vertices, np.zeros(vertices.shape[0])])
    lines = ["OFF", f"{vertices.shape[0]} {mesh.face_count} 0"]
    lines.extend(" ".join(format_number(v) for v in row) for row in vertices)
    arity = mesh.faces.shape[1] if mesh.face_count else mesh.dimension
    lines.extend(" ".join([str(arity), *(str(int(i)) for i in face)]) for face in mesh.faces)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_off(path: Path) -> BoundaryMesh:
    tokens = [
        line.split("#", 1)[0].split()
        for line in path.read_text(encoding="utf-8").splitlines()
    ]
    tokens = [t for t in tokens if t]
    if not tokens or tokens[0] != ["OFF"]:
        raise LaboratoryError(message=f"'{path}' is not an OFF file")
    try:
        n_vertices, n_faces = int(tokens[1][0]), int(tokens[1][1])
        vertices = np.asarray([[float(v) for v in row[:3]] for row in tokens[2 : 2 + n_vertices]])
        faces = [row for row in tokens[2 + n_vertices : 2 + n_vertices + n_faces]]
        if vertices.shape[0] != n_vertices or len(faces) != n_faces:
            raise ValueError(f"expected {n_vertices} vertices and {n_faces} faces")
        arity = {int(face[0]) for face in faces}
        indices = np.asarray([[int(i) for i in face[1:]] for face in faces], dtype=np.int64)
    except (IndexError, ValueError) as ex:
        raise LaboratoryError(ex, f"'{path}' is not a valid OFF file: {ex}")
    if len(arity) > 1 or not arity <= {2, 3}:
        raise LaboratoryError(message=f"'{path}' mixes face sizes {sorted(arity)}")
    dimension = arity.pop() if arity else 3
    return BoundaryMesh(vertices[:, :dimension], indices.reshape(-1, dimension))


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_number(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) if v else np.nan for v in row] for row in reader]
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))


def write_points(path: Path, points: np.ndarray) -> None:
    """Whitespace separated coordinates, one point per line."""
    lines = (" ".join(format_number(v) for v in row) for row in np.atleast_2d(points))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_points(path: Path) -> np.ndarray:
    rows = [line.split() for line in path.read_text(encoding="utf-8").splitlines()]
    return np.asarray([[float(v) for v in row] for row in rows if row], dtype=float)


def write_json(path: Path, payload: Any) -> None:
    path.write_text(to_json(payload) + "\n", encoding="utf-8")


def write_plot_data(path: Path, x, y, comment: str | None = None) -> None:
    """Two-column gnuplot data; rows with a non-positive value are left out of log plots."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    lines = [f"# {comment}"] if comment else []
    lines.extend(f"{format_number(a)} {format_number(b)}" for a, b in zip(x[keep], y[keep]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_lines(path: Path, lines: Iterable[str]) -> None:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
