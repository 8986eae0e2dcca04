"""Two-layer conjugate heat transfer for a given velocity field.

Upper (thermofluid) layer:

    c_adv rho cp u.grad Tt - c_cond div(kt grad Tt) - h / (2 Ht) (Tb - Tt) = s_t

Lower (substrate) layer, written with the interlayer flux leaving the
substrate:

    -(k_b / 2) lap Tb + sign * h / (2 H_b) (Tb - Tt) = q0 / (2 H_b) + s_b

``sign = +1`` conserves energy; ``sign = -1`` reproduces the literally
printed form of the substrate equation.

The Galerkin advection term is written in conservative form,
``div(u (Tt - T_in))``.  It equals ``u.grad Tt`` for a solenoidal field, but
the stabilized velocity is divergence-free only weakly, and near
solid/fluid interfaces the difference is a spurious heat source of tens of
percent of the applied load on coarse meshes.  The conservative form makes
the discrete global energy balance exact.  The advective term carries SUPG
stabilization with

    tau = 1 / (2 c_adv rho cp |u| / h + 4 c_cond kt / h^2 + h / (2 Ht))

The system is linear in ``(Tt, Tb)``; its dependence on ``u`` (through
advection and ``tau``) and on ``gamma`` (through ``kt``, ``h``, ``Ht``) is
available for the adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SingularSystemError, SolverError
from .materials import C_ADV, C_COND, MaterialFields, PhysicalProperties
from .mesh import DofMap, SparsePattern, StructuredMesh, assemble_vector

FIELDS = ("Tt", "Tb")
SPEED_EPS = 1e-12


@dataclass
class ThermalBC:
    """Fixed ``Tt`` dofs plus, optionally, the inlet nodes that may be released.

    With ``release_backflow`` the inlet value is imposed only where the flow
    enters (``u.n <= 0``); nodes with reverse flow through the inlet get the
    same natural outflow condition as the outlet.  Clamping them would
    discard the enthalpy they carry out.
    """

    dofmap: DofMap
    q0: float
    T_in: float
    inlet_nodes: np.ndarray | None = None
    inlet_normal: np.ndarray | None = None
    release_backflow: bool = True

    def dofmap_for(self, u: np.ndarray | None) -> DofMap:
        if u is None or not self.release_backflow or self.inlet_nodes is None:
            return self.dofmap
        out = self.inlet_nodes[u[self.inlet_nodes] @ self.inlet_normal > 0.0]
        if out.size == 0:
            return self.dofmap
        dm = DofMap(self.dofmap.fields, self.dofmap.n_nodes, self.dofmap.fixed.copy(),
                    self.dofmap.fixed_values.copy())
        d = dm.dofs("Tt", out)
        dm.fixed[d] = False
        dm.fixed_values[d] = 0.0
        return dm


def inlet_temperature_bc(mesh: StructuredMesh, T_in: float, q0: float, inlet: str = "inlet",
                         release_backflow: bool = True) -> ThermalBC:
    """``Tt = T_in`` on the inlet; every other boundary is adiabatic / outflow."""
    if not T_in > 0:
        raise ValueError("inlet temperature must be positive (kelvin)")
    dm = DofMap(FIELDS, mesh.n_nodes)
    nodes = mesh.segment(inlet)
    dm.constrain("Tt", nodes, T_in)
    return ThermalBC(dm, q0, T_in, nodes, mesh.segment_normal(inlet), release_backflow)


@dataclass
class ThermalState:
    theta: np.ndarray  # interleaved (Tt, Tb)
    dofmap: DofMap

    @property
    def Tt(self) -> np.ndarray:
        return self.theta[0::2]

    @property
    def Tb(self) -> np.ndarray:
        return self.theta[1::2]


@dataclass
class ThermalSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    exchange: sp.csr_matrix = field(default=None)


class ThermalProblem:
    def __init__(self, mesh: StructuredMesh, props: PhysicalProperties, bc: ThermalBC,
                 c_adv: float = C_ADV, c_cond: float = C_COND, energy_consistent: bool = True,
                 source_t: np.ndarray | None = None, source_b: np.ndarray | None = None,
                 conservative: bool = True):
        self.mesh, self.props, self.bc = mesh, props, bc
        self.conservative = conservative
        self.c_adv, self.c_cond = c_adv, c_cond
        self.sign = 1.0 if energy_consistent else -1.0
        self.source_t, self.source_b = source_t, source_b
        self.dofmap = bc.dofmap
        self.n_dofs = self.dofmap.n_dofs
        self.edofs = self.dofmap.element_dofs(mesh.elements)  # (ne, 8)
        self.pattern = SparsePattern(self.edofs, self.edofs, self.n_dofs, self.n_dofs)
        self._N, self._dN, self._w = mesh.N, mesh.dN, mesh.weights

    @property
    def A(self) -> float:
        return self.c_adv * self.props.rho * self.props.cp

    def _qp(self, u, mat: MaterialFields):
        ue = u[self.mesh.elements]  # (ne, 4, 2)
        U = np.einsum("qa,eai->eqi", self._N, ue)
        speed = np.sqrt(np.sum(U**2, axis=-1) + SPEED_EPS**2)
        h = self.mesh.h
        bt = mat.h / (2.0 * mat.Ht)
        tau = 1.0 / (2.0 * self.A * speed / h + 4.0 * self.c_cond * mat.kt / h**2 + bt)
        return U, speed, bt, tau

    def _div(self, u) -> np.ndarray:
        return np.einsum("eaj,qaj->eq", u[self.mesh.elements], self._dN)

    def element_matrices(self, u, mat: MaterialFields):
        N, dN, wq = self._N, self._dN, self._w
        A, c = self.A, self.c_cond
        U, _, bt, tau = self._qp(u, mat)
        bb = self.sign * mat.h / (2.0 * self.props.H_b)
        Ud = np.einsum("eqj,qaj->eqa", U, dN)
        NN = np.einsum("qa,qb->qab", N, N)
        dNdN = np.einsum("qaj,qbj->qab", dN, dN)
        adv_b = A * Ud + bt[..., None] * N[None]  # (e, q, b)
        Ktt = (np.einsum("q,qa,eqb->eab", wq, N, adv_b)
               + c * np.einsum("q,eq,qab->eab", wq, mat.kt, dNdN)
               + np.einsum("q,eq,eqa,eqb->eab", wq, tau * A, Ud, adv_b))
        Ktb = -(np.einsum("q,eq,qab->eab", wq, bt, NN)
                + np.einsum("q,eq,eqa,qb->eab", wq, tau * A * bt, Ud, N))
        if self.conservative:
            Ktt = Ktt + A * np.einsum("q,eq,qab->eab", wq, self._div(u), NN)
        Kbb = (0.5 * self.props.k_b * np.einsum("q,qab->ab", wq, dNdN)[None]
               + np.einsum("q,eq,qab->eab", wq, bb, NN))
        Kbt = -np.einsum("q,eq,qab->eab", wq, bb, NN)
        K = np.zeros((len(U), 4, 2, 4, 2))
        K[:, :, 0, :, 0] = Ktt
        K[:, :, 0, :, 1] = Ktb
        K[:, :, 1, :, 1] = Kbb
        K[:, :, 1, :, 0] = Kbt
        return K.reshape(len(U), 8, 8)

    def element_rhs(self, u, mat: MaterialFields):
        N, dN, wq = self._N, self._dN, self._w
        ne = self.mesh.n_elements
        f = np.zeros((ne, 4, 2))
        f[:, :, 1] = self.bc.q0 / (2.0 * self.props.H_b) * np.sum(wq[:, None] * N, axis=0)[None]
        if self.conservative:
            f[:, :, 0] += self.A * self.bc.T_in * np.einsum("q,qa,eq->ea", wq, N, self._div(u))
        if self.source_b is not None:
            f[:, :, 1] += np.einsum("q,qa,eq->ea", wq, N, self.source_b)
        if self.source_t is not None:
            U, _, _, tau = self._qp(u, mat)
            Ud = np.einsum("eqj,qaj->eqa", U, dN)
            f[:, :, 0] += (np.einsum("q,qa,eq->ea", wq, N, self.source_t)
                           + np.einsum("q,eq,eqa,eq->ea", wq, tau * self.A, Ud, self.source_t))
        return f.reshape(ne, 8)

    def assemble(self, u, mat: MaterialFields) -> ThermalSystem:
        K = self.pattern.assemble(self.element_matrices(u, mat))
        F = assemble_vector(self.edofs, self.element_rhs(u, mat), self.n_dofs)
        return ThermalSystem(K, F)

    def exchange_matrix(self, mat: MaterialFields) -> sp.csr_matrix:
        """Galerkin interlayer-exchange blocks alone (no SUPG, no conduction)."""
        N, wq = self._N, self._w
        NN = np.einsum("qa,qb->qab", N, N)
        bt = mat.h / (2.0 * mat.Ht)
        bb = self.sign * mat.h / (2.0 * self.props.H_b)
        K = np.zeros((self.mesh.n_elements, 4, 2, 4, 2))
        Mt = np.einsum("q,eq,qab->eab", wq, bt, NN)
        Mb = np.einsum("q,eq,qab->eab", wq, bb, NN)
        K[:, :, 0, :, 0], K[:, :, 0, :, 1] = Mt, -Mt
        K[:, :, 1, :, 1], K[:, :, 1, :, 0] = Mb, -Mb
        return self.pattern.assemble(K.reshape(-1, 8, 8))

    def residual(self, theta, u, mat: MaterialFields) -> np.ndarray:
        system = self.assemble(u, mat)
        return system.matrix @ theta - system.rhs

    def _check_anchored(self, mat: MaterialFields, dm: DofMap):
        fixed_tb = np.any(dm.fixed[1::2])
        coupling = self.mesh.integrate_qp(mat.h)
        scale = self.props.k_b * self.mesh.area / self.mesh.h**2 * self.props.H_b
        if not fixed_tb and coupling <= 1e-12 * scale:
            raise SingularSystemError("substrate temperature has no anchor: interlayer coefficient vanishes "
                                      "and Tb carries only Neumann data")

    def solve(self, u, mat: MaterialFields) -> tuple[ThermalState, ThermalSystem, object]:
        dm = self.bc.dofmap_for(u)
        self._check_anchored(mat, dm)
        system = self.assemble(u, mat)
        theta = np.where(dm.fixed, dm.fixed_values, 0.0)
        free = dm.free
        cons = np.flatnonzero(dm.fixed)
        K = system.matrix
        Kf = K[free]
        try:
            lu = splu(Kf[:, free].tocsc())
        except RuntimeError as exc:
            raise SingularSystemError(f"singular thermal system: {exc}") from exc
        theta[free] = lu.solve(system.rhs[free] - Kf[:, cons] @ theta[cons])
        if not np.all(np.isfinite(theta)):
            raise SolverError("non-finite temperature solution")
        return ThermalState(theta, dm), system, lu

    # -- sensitivities ---------------------------------------------------
    def velocity_sensitivity(self, theta, u, mat: MaterialFields) -> sp.csr_matrix:
        """``dR_T/du`` as a sparse ``(n_thermal_dofs, 2 * n_nodes)`` matrix (u interleaved)."""
        N, dN, wq = self._N, self._dN, self._w
        A, h = self.A, self.mesh.h
        U, speed, bt, tau = self._qp(u, mat)
        te = theta[self.edofs].reshape(-1, 4, 2)
        Tt, Tb = np.einsum("qa,ea->eq", N, te[:, :, 0]), np.einsum("qa,ea->eq", N, te[:, :, 1])
        gT = np.einsum("ea,qaj->eqj", te[:, :, 0], dN)
        r = A * np.einsum("eqj,eqj->eq", U, gT) + bt * (Tt - Tb)
        if self.source_t is not None:
            r = r - self.source_t
        Ud = np.einsum("eqj,qaj->eqa", U, dN)
        dtau = -(tau**2)[..., None] * (2.0 * A / h) * U / speed[..., None]  # (e,q,k)
        # dR_t,a / dU_k at each qp
        dRdU = (A * np.einsum("qa,eqk->eqak", N, gT)
                + A * (np.einsum("eqk,eqa,eq->eqak", dtau, Ud, r)
                       + np.einsum("eq,qak,eq->eqak", tau, dN, r)
                       + A * np.einsum("eq,eqa,eqk->eqak", tau, Ud, gT)))
        Ee = np.einsum("q,eqak,qb->eabk", wq, dRdU, N)  # (e, a, b, k)
        if self.conservative:
            Ee = Ee + A * np.einsum("q,qa,eq,qbk->eabk", wq, N, Tt - self.bc.T_in, dN)
        ne = self.mesh.n_elements
        el = self.mesh.elements
        rows = np.broadcast_to((2 * el)[:, :, None, None], Ee.shape)
        cols = np.broadcast_to((2 * el)[:, None, :, None] + np.arange(2), Ee.shape)
        return sp.csr_matrix((Ee.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(self.n_dofs, 2 * self.mesh.n_nodes))

    def gamma_sensitivity(self, theta, u, mat: MaterialFields) -> sp.csr_matrix:
        """``dR_T/dgamma_q`` as a sparse ``(n_thermal_dofs, n_qp)`` matrix."""
        N, dN, wq = self._N, self._dN, self._w
        A, c, h, Hb = self.A, self.c_cond, self.mesh.h, self.props.H_b
        U, _, bt, tau = self._qp(u, mat)
        te = theta[self.edofs].reshape(-1, 4, 2)
        Tt, Tb = np.einsum("qa,ea->eq", N, te[:, :, 0]), np.einsum("qa,ea->eq", N, te[:, :, 1])
        gT = np.einsum("ea,qaj->eqj", te[:, :, 0], dN)
        r = A * np.einsum("eqj,eqj->eq", U, gT) + bt * (Tt - Tb)
        if self.source_t is not None:
            r = r - self.source_t
        Ud = np.einsum("eqj,qaj->eqa", U, dN)
        dbt = mat.dh / (2.0 * mat.Ht) - mat.h * mat.dHt / (2.0 * mat.Ht**2)
        dbb = self.sign * mat.dh / (2.0 * Hb)
        dtau = -(tau**2) * (4.0 * c * mat.dkt / h**2 + dbt)
        dRt = (c * mat.dkt[:, :, None] * np.einsum("qaj,eqj->eqa", dN, gT)
               + (dbt * (Tt - Tb))[:, :, None] * N[None]
               + A * Ud * (dtau * r + tau * dbt * (Tt - Tb))[:, :, None])
        dRb = (dbb * (Tb - Tt))[:, :, None] * N[None]
        dR = np.stack([dRt, dRb], axis=-1) * wq[None, :, None, None]  # (e, q, a, layer)
        ne = self.mesh.n_elements
        rows = np.broadcast_to(self.edofs.reshape(ne, 1, 4, 2), dR.shape)
        cols = np.broadcast_to((4 * np.arange(ne))[:, None, None, None] + np.arange(4)[None, :, None, None],
                               dR.shape)
        return sp.csr_matrix((dR.ravel(), (rows.ravel(), cols.ravel())), shape=(self.n_dofs, 4 * ne))


def enthalpy_outflow(mesh: StructuredMesh, u: np.ndarray, Tt: np.ndarray, props: PhysicalProperties,
                     Ht: float, T_ref: float, c_adv: float = C_ADV) -> float:
    """Net advected enthalpy flux (W) through all boundaries, per full channel height ``2 Ht``.

    Edges are integrated with a 3-point Gauss rule, exact for the product of
    the two linear edge traces.
    """
    total = 0.0
    gx, gw = np.polynomial.legendre.leggauss(3)
    s = 0.5 * (gx + 1.0)
    for side in ("left", "right", "bottom", "top"):
        edges = mesh.segment_edges(side)
        n = mesh.segment_normal(side)
        ln = np.linalg.norm(mesh.coords[edges[:, 1]] - mesh.coords[edges[:, 0]], axis=1)
        un0, un1 = u[edges[:, 0]] @ n, u[edges[:, 1]] @ n
        t0, t1 = Tt[edges[:, 0]] - T_ref, Tt[edges[:, 1]] - T_ref
        un = un0[:, None] * (1 - s) + un1[:, None] * s
        tt = t0[:, None] * (1 - s) + t1[:, None] * s
        total += float(np.sum(0.5 * gw * un * tt * ln[:, None]))
    return 2.0 * Ht * c_adv * props.rho * props.cp * total
