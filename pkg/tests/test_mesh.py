import numpy as np
import pytest

from coolopt.errors import MeshError
from coolopt.mesh import DofMap, build_mesh


def test_counts_and_area():
    mesh = build_mesh(10e-3, 7e-3, 12, 8)
    assert mesh.n_nodes == 13 * 9
    assert mesh.n_elements == 96
    assert mesh.integrate_qp(np.ones((mesh.n_elements, 4))) == pytest.approx(7e-5, rel=1e-12)


def test_ports_snap_to_nodes_and_face_left():
    mesh = build_mesh(10e-3, 7e-3, 40, 28)
    for name in ("inlet", "outlet"):
        nodes = mesh.segment(name)
        assert np.allclose(mesh.coords[nodes, 0], 0.0)
        assert np.allclose(mesh.segment_normal(name), [-1.0, 0.0])
    assert mesh.coords[mesh.segment("outlet"), 1].max() < mesh.coords[mesh.segment("inlet"), 1].min()


def test_quadrature_integrates_bilinear_exactly():
    mesh = build_mesh(2.0, 1.0, 3, 5)
    qp = mesh.qp_coords()
    value = mesh.integrate_qp(qp[..., 0] * qp[..., 1])
    assert value == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("args", [(0.0, 1.0, 4, 4), (1.0, 1.0, 0, 4)])
def test_invalid_mesh(args):
    with pytest.raises(MeshError):
        build_mesh(*args)


def test_overlapping_ports_rejected():
    with pytest.raises(MeshError):
        build_mesh(1.0, 1.0, 10, 10, inlet=(0.1, 0.3), outlet=(0.2, 0.4))


def test_dofmap_constraints():
    dm = DofMap(("a", "b"), 4)
    dm.constrain("b", [1, 3], 2.5)
    assert dm.n_fixed == 2
    assert set(dm.free) == set(range(8)) - {3, 7}
    assert np.all(dm.fixed_values[[3, 7]] == 2.5)
