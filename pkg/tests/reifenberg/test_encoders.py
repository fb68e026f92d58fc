from __future__ import annotations

import numpy as np
import pytest

from reifenberg.encoders import format_number
from reifenberg.encoders import read_csv
from reifenberg.encoders import read_off
from reifenberg.encoders import read_points
from reifenberg.encoders import write_csv
from reifenberg.encoders import write_off
from reifenberg.encoders import write_plot_data
from reifenberg.encoders import write_points
from reifenberg.errors import LaboratoryError
from reifenberg.geometry import BoundaryMesh


def test_should_format_numbers_reproducibly():
    assert format_number(0.1) == "0.1"
    assert format_number(np.float64(1 / 3)) == repr(1 / 3)
    assert format_number(np.int64(7)) == "7"
    assert format_number(True) == "1"
    assert format_number(None) == ""


def test_should_write_planar_mesh_with_segments(tmp_path):
    mesh = BoundaryMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]), [[0, 1], [1, 2], [2, 0]])
    path = tmp_path / "triangle.off"
    write_off(mesh, path)
    lines = path.read_text().splitlines()
    assert lines[:2] == ["OFF", "3 3 0"]
    assert lines[2] == "0.0 0.0 0.0"
    assert lines[-1] == "2 2 0"

    loaded = read_off(path)
    assert loaded.dimension == 2
    assert np.array_equal(loaded.vertices, mesh.vertices)
    assert np.array_equal(loaded.faces, mesh.faces)


def test_should_keep_triangles_in_space(tmp_path):
    vertices = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    faces = [[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]
    mesh = BoundaryMesh(vertices, faces)
    path = tmp_path / "tetra.off"
    write_off(mesh, path)
    loaded = read_off(path)
    assert loaded.dimension == 3
    assert loaded.face_count == 4
    assert loaded.measure == pytest.approx(mesh.measure)


def test_should_reject_files_that_are_not_off(tmp_path):
    path = tmp_path / "bad.off"
    path.write_text("PLY\n1 0 0\n")
    with pytest.raises(LaboratoryError, match="is not an OFF file"):
        read_off(path)


def test_should_reject_truncated_off(tmp_path):
    path = tmp_path / "short.off"
    path.write_text("OFF\n3 1 0\n0 0 0\n")
    with pytest.raises(LaboratoryError, match="is not a valid OFF file"):
        read_off(path)


def test_should_write_csv_rows(tmp_path):
    path = tmp_path / "estimates.csv"
    write_csv(path, ["r", "omega_hat", "seed"], [[0.5, 0.25, 3], [0.25, 0.125, None]])
    assert path.read_text() == "r,omega_hat,seed\n0.5,0.25,3\n0.25,0.125,\n"
    header, rows = read_csv(path)
    assert header == ["r", "omega_hat", "seed"]
    assert rows.shape == (2, 3)
    assert np.isnan(rows[1, 2])


def test_should_write_points_one_per_line(tmp_path):
    path = tmp_path / "E.txt"
    write_points(path, np.array([[0.5, 0.0], [-0.5, 0.0]]))
    assert np.array_equal(read_points(path), [[0.5, 0.0], [-0.5, 0.0]])


def test_should_leave_non_positive_values_out_of_plots(tmp_path):
    path = tmp_path / "loglog.dat"
    write_plot_data(path, [1.0, 2.0, 4.0], [3.0, 0.0, 5.0], "1/s N(s)")
    assert path.read_text().splitlines() == ["# 1/s N(s)", "1.0 3.0", "4.0 5.0"]
