import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coolopt.errors import SolverError
from coolopt.flow import FlowProblem, FlowSettings, flow_rate, pressure_driven_bc
from coolopt.geometry import ComponentSet, WallComponent, gamma_at
from coolopt.materials import C_MOM, alpha_of
from coolopt.mesh import build_mesh
from coolopt.verification import brinkman_suppression, poiseuille_profile_error

LX, LY = 10e-3, 7e-3


def _problem(props, p_in=200.0, n=(20, 14)):
    mesh = build_mesh(LX, LY, *n)
    return mesh, FlowProblem(mesh, props.rho, props.mu, pressure_driven_bc(mesh, p_in), C_MOM)


def _alpha(mesh, ramp, value=1.0):
    return np.full((mesh.n_elements, 4), alpha_of(value, ramp)[0])


def test_zero_pressure_gives_rest(props, ramp):
    mesh, problem = _problem(props, 0.0)
    state = problem.solve(_alpha(mesh, ramp))
    assert np.all(state.w == 0.0)


def test_open_cavity_conserves_mass(props, ramp):
    mesh, problem = _problem(props)
    state = problem.solve(_alpha(mesh, ramp))
    q_in, q_out = flow_rate(state, mesh, "inlet"), flow_rate(state, mesh, "outlet")
    assert q_in < 0 < q_out
    assert abs(q_in + q_out) < 1e-10 * abs(q_in)
    assert state.residual_history[-1] < 1e-8


def test_darcy_regime_is_linear_in_pressure(props, ramp):
    rates = []
    for p_in in (100.0, 200.0):
        mesh, problem = _problem(props, p_in)
        rates.append(flow_rate(problem.solve(_alpha(mesh, ramp, 0.0)), mesh, "outlet"))
    assert rates[1] / rates[0] == pytest.approx(2.0, rel=1e-6)


def test_poiseuille_profile_between_brinkman_walls():
    assert poiseuille_profile_error(nx=20, ny=40) < 0.03


def test_solid_block_suppresses_flow():
    assert brinkman_suppression(30, 21) < 1e-3


@settings(max_examples=8)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(seed):
    from coolopt.materials import PhysicalProperties, RampParameters
    props = PhysicalProperties()
    ramp = RampParameters.defaults(props, LX)
    rng = np.random.default_rng(seed)
    mesh, problem = _problem(props, 200.0, (6, 4))
    w = rng.normal(scale=0.05, size=problem.n_dofs)
    w[2::3] *= 1e3
    alpha = rng.uniform(ramp.alpha_f, 10 * ramp.alpha_f, (mesh.n_elements, 4))
    _, J = problem.residual_and_jacobian(w, alpha)
    d = rng.normal(size=w.size) * np.abs(w).max()
    h = 1e-7
    fd = (problem.residual(w + h * d, alpha) - problem.residual(w - h * d, alpha)) / (2 * h)
    assert np.linalg.norm(J @ d - fd) <= 1e-6 * np.linalg.norm(fd)


def test_alpha_sensitivity_matches_finite_differences(props, ramp, rng):
    mesh, problem = _problem(props, 200.0, (6, 4))
    w = problem.solve(_alpha(mesh, ramp)).w
    alpha = _alpha(mesh, ramp) * rng.uniform(1, 3, (mesh.n_elements, 4))
    dR = problem.alpha_sensitivity(w, alpha)
    d = rng.normal(size=alpha.shape) * alpha
    h = 1e-6
    fd = (problem.residual(w, alpha + h * d) - problem.residual(w, alpha - h * d)) / (2 * h)
    assert np.allclose(dR @ d.ravel(), fd, rtol=1e-6, atol=1e-9 * np.abs(fd).max())


def test_newton_failure_raises_with_history(props, ramp):
    mesh, problem = _problem(props)
    with pytest.raises(SolverError) as info:
        problem.solve(_alpha(mesh, ramp), FlowSettings(max_newton=1, continuation=(1.0,)))
    assert len(info.value.history) >= 2


def test_walls_redirect_flow(props, ramp):
    mesh, problem = _problem(props)
    wall = WallComponent(5e-3, 3.5e-3, 3e-3, 0.5e-3, 0.0)
    gamma = gamma_at(ComponentSet((wall,)), mesh.qp_coords())
    state = problem.solve(alpha_of(gamma, ramp)[0])
    deep = (np.abs(mesh.coords[:, 0] - 5e-3) < 2e-3) & (np.abs(mesh.coords[:, 1] - 3.5e-3) < 0.2e-3)
    assert state.speed[deep].max() < 1e-2 * state.speed.max()
