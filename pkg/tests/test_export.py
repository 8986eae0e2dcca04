import numpy as np
import pytest

from coolopt.errors import ArtifactError
from coolopt.export import FieldSnapshot, load_snapshot, save_snapshot, write_csv, write_vtk
from coolopt.mesh import build_mesh


@pytest.fixture
def snap():
    mesh = build_mesh(1.0, 1.0, 3, 10)
    rng = np.random.default_rng(0)
    nodal = {k: rng.random(mesh.n_nodes) for k in ("speed", "Tt", "Tb", "p")}
    return mesh, FieldSnapshot("end", "B", 7, nodal, rng.random(mesh.n_elements), {"J": 1.5})


def test_vtk_layout(snap, tmp_path):
    mesh, s = snap
    text = write_vtk(tmp_path / "s.vtk", mesh, s).read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert "DIMENSIONS 4 11 1" in text
    assert f"POINT_DATA {mesh.n_nodes}" in text and f"CELL_DATA {mesh.n_elements}" in text
    assert text.count("LOOKUP_TABLE default") == 5


def test_csv_files(snap, tmp_path):
    mesh, s = snap
    paths = write_csv(tmp_path, mesh, s)
    assert len(paths) == 5
    rows = paths[0].read_text().splitlines()
    assert rows[0] == "x,y,value" and len(rows) == mesh.n_nodes + 1


def test_snapshot_round_trip_is_lossless_and_deterministic(snap, tmp_path):
    _, s = snap
    a = save_snapshot(tmp_path / "a.npz", s)
    b = save_snapshot(tmp_path / "b.npz", s)
    assert a.read_bytes() == b.read_bytes()
    back = load_snapshot(a)
    assert back.name == s.name == "end_B_0007" and back.meta == s.meta
    for k in s.nodal:
        assert np.array_equal(back.nodal[k], s.nodal[k])
    assert np.array_equal(back.gamma, s.gamma)


def test_unreadable_snapshot(tmp_path):
    bad = tmp_path / "bad.npz"
    bad.write_text("nope")
    with pytest.raises(ArtifactError):
        load_snapshot(bad)
