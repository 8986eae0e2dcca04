import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from coolopt.cache import ComponentDesign, DensityDesign, density_filter_matrix, evaluate_material_cache
from coolopt.geometry import ComponentBounds, initial_layout
from coolopt.mesh import build_mesh

MESH = build_mesh(10e-3, 7e-3, 12, 10)


@settings(max_examples=20)
@given(st.floats(0.5, 4.0))
def test_filter_rows_are_convex_weights(radius_cells):
    W = density_filter_matrix(MESH, radius_cells * MESH.h)
    assert np.allclose(np.asarray(W.sum(axis=1)).ravel(), 1.0, atol=1e-14)
    assert W.min() >= 0.0
    x = np.random.default_rng(0).random(MESH.n_elements)
    y = W @ x
    assert y.min() >= x.min() - 1e-14 and y.max() <= x.max() + 1e-14


def test_density_jacobian_is_exact():
    design = DensityDesign(MESH, 0.7, filter_radius=2 * MESH.h)
    x = np.random.default_rng(1).random(MESH.n_elements)
    gamma, jac = design.gamma(x, jacobian=True)
    assert jac.shape == (MESH.n_qp, MESH.n_elements)
    assert np.allclose(jac @ x, gamma.ravel(), rtol=1e-14)  # linear map


def test_component_jacobian_masks_frozen_variables():
    cset = initial_layout(MESH.Lx, MESH.Ly, (1, 1), (2, 1))
    design = ComponentDesign(MESH, cset, ComponentBounds.defaults(MESH.Lx, MESH.Ly), "walls", "both")
    _, jac = design.gamma(design.x0, jacobian=True)
    assert np.all(jac[:, ~design.active] == 0.0)
    assert np.any(jac[:, design.active] != 0.0)


def test_material_cache_for_all_fluid(ramp):
    cache = evaluate_material_cache(MESH, None, ramp)
    assert np.all(cache.gamma == 1.0) and np.allclose(cache.material.alpha, ramp.alpha_f)
