import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coolopt.cache import ComponentDesign, DensityDesign
from coolopt.geometry import ComponentBounds, initial_layout
from coolopt.objective import (ObjectiveConfig, adjoint_gradient, design_objective, fd_gradient_oracle, p_mean,
                               p_mean_gradient, p_mean_values)

temps = st.lists(st.floats(250.0, 450.0), min_size=1, max_size=30)


def test_worked_p_mean_values():
    assert p_mean_values([310.0, 310.0], 1.0, 10) == pytest.approx(310.0, rel=1e-12)
    expected = ((300.0**10 + 320.0**10) / 2) ** 0.1
    assert p_mean_values([300.0, 320.0], 1.0, 10) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(311.43, abs=5e-3)


@given(temps)
def test_p_mean_between_mean_and_max(values):
    v = np.array(values)
    J = p_mean_values(v, 1.0, 10.0)
    assert v.mean() * (1 - 1e-12) <= J <= v.max() * (1 + 1e-12)


@given(temps, st.floats(1.0, 20.0), st.floats(1.0, 20.0))
def test_p_mean_grows_with_exponent(values, p1, p2):
    lo, hi = sorted((p1, p2))
    assert p_mean_values(values, 1.0, lo) <= p_mean_values(values, 1.0, hi) * (1 + 1e-12)


def test_p_mean_rejects_nonpositive_temperature():
    with pytest.raises(ValueError):
        p_mean_values([0.0, 300.0], 1.0, 10)
    with pytest.raises(ValueError):
        ObjectiveConfig(0.5)


def test_p_mean_nodal_gradient(small_model, rng):
    mesh = small_model.mesh
    Tb = 300.0 + 30.0 * rng.random(mesh.n_nodes)
    J, grad = p_mean_gradient(mesh, Tb)
    assert J == pytest.approx(p_mean(mesh, Tb), rel=1e-14)
    d = rng.normal(size=Tb.size)
    h = 1e-4
    fd = (p_mean(mesh, Tb + h * d) - p_mean(mesh, Tb - h * d)) / (2 * h)
    assert grad @ d == pytest.approx(fd, rel=1e-7)


def test_component_gradient_against_finite_differences(small_model):
    mesh = small_model.mesh
    cset = initial_layout(mesh.Lx, mesh.Ly, walls_grid=(2, 1), fins_grid=(2, 2))
    design = ComponentDesign(mesh, cset, ComponentBounds.defaults(mesh.Lx, mesh.Ly), "both", "both",
                             0.5 * mesh.h)
    x = design.x0
    report = adjoint_gradient(small_model, design, x)
    assert max(report.adjoint_residuals.values()) < 1e-6
    idx = [0, 2, 4, 10, 13]
    fd, failed = fd_gradient_oracle(design_objective(small_model, design), x, idx)
    assert not failed
    assert np.allclose(report.gradient[idx], fd, rtol=1e-4)


def test_stage_mask_zeroes_frozen_variables(small_model):
    mesh = small_model.mesh
    cset = initial_layout(mesh.Lx, mesh.Ly, walls_grid=(1, 1), fins_grid=(2, 1))
    design = ComponentDesign(mesh, cset, ComponentBounds.defaults(mesh.Lx, mesh.Ly), "fins", "both")
    g = adjoint_gradient(small_model, design, design.x0).gradient
    walls = [i for i, lab in enumerate(design.labels) if lab.startswith("wall")]
    assert np.all(g[walls] == 0.0)
    assert np.any(g != 0.0)


def test_density_gradient_against_finite_differences(small_model):
    design = DensityDesign(small_model.mesh, 0.8, filter_radius=2 * small_model.mesh.h)
    x = design.x0
    g = adjoint_gradient(small_model, design, x).gradient
    idx = list(np.argsort(np.abs(g))[-4:])
    fd, _ = fd_gradient_oracle(design_objective(small_model, design), x, idx)
    assert np.allclose(g[idx], fd, rtol=1e-4)
