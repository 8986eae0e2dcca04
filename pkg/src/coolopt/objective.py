"""p-mean substrate temperature objective and its discrete adjoint gradient."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .cache import QuadratureCache
from .errors import SolverError
from .flow import FlowProblem, FlowSettings, FlowState, pressure_driven_bc
from .materials import MaterialFields, PhysicalProperties, RampParameters, TwoLayerConstants
from .mesh import StructuredMesh
from .thermal import ThermalProblem, ThermalState, inlet_temperature_bc

log = logging.getLogger(__name__)


@dataclass
class ObjectiveConfig:
    p_exponent: float = 10.0

    def __post_init__(self):
        if self.p_exponent < 1:
            raise ValueError("p-mean exponent must be >= 1")


def p_mean_values(values, weights, p: float) -> float:
    """``(sum w T^p / sum w)^(1/p)``, scaled by ``max T`` to avoid overflow."""
    values = np.asarray(values, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), values.shape)
    if np.any(values <= 0):
        raise ValueError("p-mean requires strictly positive temperatures")
    top = values.max()
    mean = np.sum(weights * (values / top) ** p) / np.sum(weights)
    return float(top * mean ** (1.0 / p))


def p_mean(mesh: StructuredMesh, Tb: np.ndarray, config: ObjectiveConfig | None = None) -> float:
    config = config or ObjectiveConfig()
    Tq = mesh.to_qp(Tb)
    return p_mean_values(Tq, mesh.weights[None, :], config.p_exponent)


def p_mean_gradient(mesh: StructuredMesh, Tb: np.ndarray, config: ObjectiveConfig | None = None):
    """Return ``J`` and ``dJ/dTb`` at the nodes."""
    config = config or ObjectiveConfig()
    p = config.p_exponent
    Tq = mesh.to_qp(Tb)
    J = p_mean_values(Tq, mesh.weights[None, :], p)
    top = Tq.max()
    dJ_dTq = (J / top) ** (1.0 - p) * (Tq / top) ** (p - 1.0) * mesh.weights[None, :] / mesh.area
    grad = np.bincount(mesh.elements.ravel(), weights=np.einsum("eq,qa->ea", dJ_dTq, mesh.N).ravel(),
                       minlength=mesh.n_nodes)
    return J, grad


@dataclass
class Solution:
    cache: QuadratureCache
    flow: FlowState
    thermal: ThermalState
    J: float
    thermal_lu: object = field(repr=False, default=None)


@dataclass
class GradientReport:
    gradient: np.ndarray
    dJ_dgamma: np.ndarray
    adjoint_residuals: dict
    fd_table: list | None = None


class ThermofluidModel:
    """Forward flow + heat solve and objective for a fixed mesh and operating point."""

    def __init__(self, mesh: StructuredMesh, props: PhysicalProperties, ramp: RampParameters,
                 p_in: float, T_in: float = 303.0, flow_settings: FlowSettings | None = None,
                 objective: ObjectiveConfig | None = None, constants: TwoLayerConstants | None = None,
                 energy_consistent: bool = True, release_backflow: bool = True):
        constants = constants or TwoLayerConstants()
        self.mesh, self.props, self.ramp = mesh, props, ramp
        self.p_in, self.T_in = p_in, T_in
        self.flow_settings = flow_settings or FlowSettings()
        self.objective = objective or ObjectiveConfig()
        self.flow = FlowProblem(mesh, props.rho, props.mu, pressure_driven_bc(mesh, p_in), constants.c_mom)
        tbc = inlet_temperature_bc(mesh, T_in, props.q0, release_backflow=release_backflow)
        self.thermal = ThermalProblem(mesh, props, tbc, constants.c_adv, constants.c_cond, energy_consistent)
        self.warm_start: np.ndarray | None = None

    def cache_for(self, gamma: np.ndarray, dgamma_dx=None) -> QuadratureCache:
        return QuadratureCache(self.mesh, MaterialFields.from_gamma(gamma, self.ramp), dgamma_dx)

    def solve(self, gamma: np.ndarray, dgamma_dx=None, warm: bool = True,
              settings: FlowSettings | None = None) -> Solution:
        cache = self.cache_for(gamma, dgamma_dx)
        initial = self.warm_start if warm else None
        flow = self.flow.solve(cache.material.alpha, settings or self.flow_settings, initial)
        thermal, _, lu = self.thermal.solve(flow.u, cache.material)
        J = p_mean(self.mesh, thermal.Tb, self.objective)
        if warm:
            self.warm_start = flow.w.copy()
        return Solution(cache, flow, thermal, J, lu)

    def dJ_dgamma(self, sol: Solution) -> tuple[np.ndarray, dict]:
        """Reverse-order discrete adjoint: thermal, then flow.  Returns ``dJ/dgamma_q``."""
        mat = sol.cache.material
        u, w, theta = sol.flow.u, sol.flow.w, sol.thermal.theta
        _, dJ_dTb = p_mean_gradient(self.mesh, sol.thermal.Tb, self.objective)
        g = np.zeros(self.thermal.n_dofs)
        g[1::2] = dJ_dTb

        tdm = sol.thermal.dofmap
        tfree = tdm.free
        lam_T = np.zeros(self.thermal.n_dofs)
        K = self.thermal.assemble(u, mat).matrix
        lu_T = sol.thermal_lu or splu(K[tfree][:, tfree].tocsc())
        lam_T[tfree] = lu_T.solve(g[tfree], trans="T")
        res_T = float(np.linalg.norm(K[tfree][:, tfree].T @ lam_T[tfree] - g[tfree]))

        dRT_du = self.thermal.velocity_sensitivity(theta, u, mat)  # (nT, 2 nn)
        rhs_u = -(dRT_du.T @ lam_T)
        rhs = np.zeros(self.flow.n_dofs)
        rhs.reshape(-1, 3)[:, :2] = rhs_u.reshape(-1, 2)
        fdm = self.flow.dofmap
        ffree = fdm.free
        _, Jf = self.flow.residual_and_jacobian(w, mat.alpha)
        Jff = Jf[ffree][:, ffree].tocsc()
        try:
            lu_f = splu(Jff)
        except RuntimeError as exc:
            raise SolverError(f"flow adjoint factorization failed: {exc}") from exc
        lam_f = np.zeros(self.flow.n_dofs)
        lam_f[ffree] = lu_f.solve(rhs[ffree], trans="T")
        res_f = float(np.linalg.norm(Jff.T @ lam_f[ffree] - rhs[ffree]))

        dRT_dg = self.thermal.gamma_sensitivity(theta, u, mat)
        dRf_da = self.flow.alpha_sensitivity(w, mat.alpha)
        dJ = -(dRT_dg.T @ lam_T) - (dRf_da.T @ lam_f) * mat.dalpha.ravel()
        return dJ, {"thermal": res_T, "flow": res_f}


def adjoint_gradient(model: ThermofluidModel, design, x, solution: Solution | None = None) -> GradientReport:
    """Gradient of the p-mean objective with respect to the scaled design ``x``.

    ``design`` is a ``ComponentDesign`` or ``DensityDesign``; entries of
    inactive variables are exactly zero.
    """
    if solution is None or solution.cache.dgamma_dx is None:
        gamma, jac = design.gamma(x, jacobian=True)
        solution = model.solve(gamma, jac)
    dJ_dg, residuals = model.dJ_dgamma(solution)
    grad = np.asarray(solution.cache.dgamma_dx.T @ dJ_dg).ravel()
    grad[~design.active] = 0.0
    return GradientReport(grad, dJ_dg, residuals)


def fd_gradient_oracle(evaluate, x, indices, step: float = 1e-4,
                       richardson: bool = True) -> tuple[np.ndarray, list[int]]:
    """Central differences of ``evaluate(x) -> J`` with full re-solves.

    With ``richardson`` the central differences at ``step`` and ``step / 2``
    are combined as ``(4 D(h/2) - D(h)) / 3``, which cancels the ``O(h^2)``
    term.  The sharp projection makes that term large in scaled units.
    Entries whose perturbed solves fail are NaN and listed in the second
    return value.
    """
    x = np.asarray(x, dtype=float)
    out = np.full(len(indices), np.nan)
    failed = []

    def central(i, h):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        return (evaluate(xp) - evaluate(xm)) / (2.0 * h)

    for n, i in enumerate(indices):
        try:
            d = central(i, step)
            if richardson:
                d = (4.0 * central(i, 0.5 * step) - d) / 3.0
            out[n] = d
        except SolverError as exc:
            log.warning("finite-difference solve failed for variable %d: %s", i, exc)
            failed.append(int(i))
    return out, failed


def design_objective(model: ThermofluidModel, design, settings: FlowSettings | None = None):
    """Closure ``x -> J`` that re-solves from rest each call (no warm start)."""
    def evaluate(x):
        gamma, _ = design.gamma(x)
        return model.solve(gamma, warm=False, settings=settings).J
    return evaluate
