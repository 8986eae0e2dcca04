"""Stationary Navier-Stokes-Brinkman flow on equal-order Q1 elements.

Momentum ``c rho (u.grad)u + grad p - mu div(grad u + grad u^T) + alpha u = f``
and continuity ``div u = 0`` are stabilized with SUPG (momentum) and PSPG
(continuity) using the element parameter

    tau = 1 / (2 c rho |u| / h + 4 mu / h^2 + alpha)

The viscous term is dropped from the strong residual (its second derivatives
vanish on affine Q1 elements up to the mixed term).  The Jacobian is the exact
linearization of the discrete residual, including the dependence of ``tau``
on ``|u|`` and ``alpha``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import SolverError
from .materials import C_MOM
from .mesh import DofMap, SparsePattern, StructuredMesh, assemble_vector

log = logging.getLogger(__name__)

FIELDS = ("ux", "uy", "p")
SPEED_EPS = 1e-12


@dataclass
class Traction:
    """Prescribed normal traction ``-pressure * n`` on a boundary segment."""

    edges: np.ndarray
    normal: np.ndarray
    pressure: float


@dataclass
class FlowBC:
    dofmap: DofMap
    tractions: list[Traction] = field(default_factory=list)


def pressure_driven_bc(mesh: StructuredMesh, p_in: float, p_out: float = 0.0,
                       inlet: str = "inlet", outlet: str = "outlet") -> FlowBC:
    """No-slip everywhere except the open segments.

    Open segments carry a normal traction and zero tangential velocity; their
    end nodes touch the walls and stay no-slip.
    """
    dm = DofMap(FIELDS, mesh.n_nodes)
    boundary = mesh.boundary_nodes()
    dm.constrain("ux", boundary, 0.0)
    dm.constrain("uy", boundary, 0.0)
    tractions = []
    for name, pressure in ((inlet, p_in), (outlet, p_out)):
        nodes = mesh.segment(name)
        normal = mesh.segment_normal(name)
        normal_comp = "ux" if abs(normal[0]) > 0.5 else "uy"
        dm.fixed[dm.dofs(normal_comp, nodes[1:-1])] = False
        tractions.append(Traction(mesh.segment_edges(name), normal, float(pressure)))
    return FlowBC(dm, tractions)


@dataclass
class FlowSettings:
    newton_tol: float = 1e-8
    max_newton: int = 25
    continuation: tuple[float, ...] = (0.25, 0.5, 1.0)
    max_line_search: int = 10


@dataclass
class FlowState:
    w: np.ndarray  # interleaved (ux, uy, p) per node
    dofmap: DofMap
    newton_iterations: int = 0
    residual_history: list[float] = field(default_factory=list)

    @property
    def u(self) -> np.ndarray:
        return self.w.reshape(-1, 3)[:, :2]

    @property
    def p(self) -> np.ndarray:
        return self.w.reshape(-1, 3)[:, 2]

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.u[:, 0], self.u[:, 1])


class FlowProblem:
    """Discrete flow operator on a fixed mesh and boundary description."""

    def __init__(self, mesh: StructuredMesh, rho: float, mu: float, bc: FlowBC,
                 c_mom: float = C_MOM, body_force: np.ndarray | None = None):
        self.mesh, self.rho, self.mu, self.c = mesh, rho, mu, c_mom
        self.bc = bc
        self.dofmap = bc.dofmap
        self.body_force = body_force
        self.edofs = self.dofmap.element_dofs(mesh.elements)
        self.pattern = SparsePattern(self.edofs, self.edofs, self.dofmap.n_dofs, self.dofmap.n_dofs)
        self._N, self._dN, self._w = mesh.N, mesh.dN, mesh.weights
        self.n_dofs = self.dofmap.n_dofs
        # continuity rows are scaled into momentum units for convergence checks
        self._row_scale = np.ones(self.n_dofs)
        self._row_scale[2::3] = mu / mesh.h

    # -- element kernels -------------------------------------------------
    def _qp_state(self, w):
        we = w[self.edofs].reshape(-1, 4, 3)
        ue, pe = we[:, :, :2], we[:, :, 2]
        N, dN = self._N, self._dN
        U = np.einsum("qa,eai->eqi", N, ue)
        G = np.einsum("eai,qaj->eqij", ue, dN)
        gp = np.einsum("ea,qaj->eqj", pe, dN)
        P = np.einsum("qa,ea->eq", N, pe)
        return U, G, gp, P

    def _stabilization(self, U, alpha):
        h, c, rho = self.mesh.h, self.c, self.rho
        speed = np.sqrt(np.sum(U**2, axis=-1) + SPEED_EPS**2)
        tau = 1.0 / (2.0 * c * rho * speed / h + 4.0 * self.mu / h**2 + alpha)
        dtau_dU = -(tau**2)[..., None] * (2.0 * c * rho / h) * U / speed[..., None]
        return tau, dtau_dU

    def element_terms(self, w, alpha, load=1.0, jacobian=True, alpha_sensitivity=False):
        """Element residuals ``(ne, 12)``, Jacobians ``(ne, 12, 12)`` and ``dR/dalpha``.

        ``alpha`` has shape ``(ne, 4)``; ``dR/dalpha`` is ``(ne, 12, 4)``.
        """
        N, dN, wq = self._N, self._dN, self._w
        c, rho, mu = self.c, self.rho, self.mu
        U, G, gp, P = self._qp_state(w)
        tau, dtau_dU = self._stabilization(U, alpha)
        conv = c * rho * np.einsum("eqij,eqj->eqi", G, U)
        react = conv + alpha[..., None] * U
        if self.body_force is not None:
            react = react - load * self.body_force
        rm = react + gp
        Ud = np.einsum("eqj,qaj->eqa", U, dN)
        supg = c * rho * tau

        Rm = (np.einsum("q,qa,eqi->eai", wq, N, react)
              + mu * np.einsum("q,qaj,eqij->eai", wq, dN, G + np.swapaxes(G, -1, -2))
              - np.einsum("q,eq,qai->eai", wq, P, dN)
              + np.einsum("q,eq,eqa,eqi->eai", wq, supg, Ud, rm))
        Rp = (np.einsum("q,qa,eq->ea", wq, N, np.trace(G, axis1=-2, axis2=-1))
              + np.einsum("q,eq,qaj,eqj->ea", wq, tau, dN, rm))
        R = np.concatenate([Rm, Rp[..., None]], axis=-1).reshape(len(U), 12)
        out = [R]

        if jacobian:
            ne = len(U)
            eye = np.eye(2)
            # d rm_i / d u_bk
            D = (c * rho * (np.einsum("ik,eqb->eqibk", eye, Ud) + np.einsum("eqik,qb->eqibk", G, N))
                 + np.einsum("eq,ik,qb->eqibk", alpha, eye, N))
            dtau = np.einsum("eqk,qb->eqbk", dtau_dU, N)
            dNdN = np.einsum("qaj,qbj->qab", dN, dN)
            Juu = (np.einsum("q,qa,eqibk->eaibk", wq, N, D)
                   + mu * (np.einsum("q,ik,qab->aibk", wq, eye, dNdN)
                           + np.einsum("q,qak,qbi->aibk", wq, dN, dN))[None]
                   + c * rho * (np.einsum("q,eqbk,eqa,eqi->eaibk", wq, dtau, Ud, rm)
                                + np.einsum("q,eq,qb,qak,eqi->eaibk", wq, tau, N, dN, rm)
                                + np.einsum("q,eq,eqa,eqibk->eaibk", wq, tau, Ud, D)))
            Jup = (-np.einsum("q,qb,qai->aib", wq, N, dN)[None]
                   + np.einsum("q,eq,eqa,qbi->eaib", wq, supg, Ud, dN))
            Jpu = (np.einsum("q,qa,qbk->abk", wq, N, dN)[None]
                   + np.einsum("q,eqbk,qai,eqi->eabk", wq, dtau, dN, rm)
                   + np.einsum("q,eq,qai,eqibk->eabk", wq, tau, dN, D))
            Jpp = np.einsum("q,eq,qab->eab", wq, tau, dNdN)
            J = np.zeros((ne, 4, 3, 4, 3))
            J[:, :, :2, :, :2] = Juu
            J[:, :, :2, :, 2] = Jup
            J[:, :, 2, :, :2] = Jpu
            J[:, :, 2, :, 2] = Jpp
            out.append(J.reshape(ne, 12, 12))

        if alpha_sensitivity:
            dtau_da = -tau**2
            dRm = (np.einsum("q,qa,eqi->eaiq", wq, N, U)
                   + c * rho * (np.einsum("q,eq,eqa,eqi->eaiq", wq, dtau_da, Ud, rm)
                                + np.einsum("q,eq,eqa,eqi->eaiq", wq, tau, Ud, U)))
            dRp = (np.einsum("q,eq,qaj,eqj->eaq", wq, dtau_da, dN, rm)
                   + np.einsum("q,eq,qaj,eqj->eaq", wq, tau, dN, U))
            dR = np.concatenate([dRm, dRp[:, :, None, :]], axis=2).reshape(len(U), 12, 4)
            out.append(dR)
        return out

    # -- global operators ------------------------------------------------
    def traction_vector(self, load=1.0) -> np.ndarray:
        F = np.zeros(self.n_dofs)
        xy = self.mesh.coords
        for t in self.bc.tractions:
            lengths = np.linalg.norm(xy[t.edges[:, 1]] - xy[t.edges[:, 0]], axis=1)
            for comp in range(2):
                if t.normal[comp] == 0.0:
                    continue
                contrib = load * t.pressure * t.normal[comp] * 0.5 * lengths
                np.add.at(F, 3 * t.edges[:, 0] + comp, contrib)
                np.add.at(F, 3 * t.edges[:, 1] + comp, contrib)
        return F

    def residual(self, w, alpha, load=1.0) -> np.ndarray:
        (Re,) = self.element_terms(w, alpha, load, jacobian=False)
        return assemble_vector(self.edofs, Re, self.n_dofs) + self.traction_vector(load)

    def residual_and_jacobian(self, w, alpha, load=1.0):
        Re, Je = self.element_terms(w, alpha, load)
        R = assemble_vector(self.edofs, Re, self.n_dofs) + self.traction_vector(load)
        return R, self.pattern.assemble(Je)

    def alpha_sensitivity(self, w, alpha) -> sp.csr_matrix:
        """``dR/dalpha_q`` as a sparse ``(n_dofs, n_qp)`` matrix."""
        _, dR = self.element_terms(w, alpha, jacobian=False, alpha_sensitivity=True)
        ne = self.mesh.n_elements
        rows = np.repeat(self.edofs[:, :, None], 4, axis=2)
        cols = np.broadcast_to((4 * np.arange(ne))[:, None, None] + np.arange(4), rows.shape)
        return sp.csr_matrix((dR.ravel(), (rows.ravel(), cols.ravel())),
                             shape=(self.n_dofs, 4 * ne))

    def initial_state(self) -> np.ndarray:
        return np.where(self.dofmap.fixed, self.dofmap.fixed_values, 0.0)

    def _norm(self, R, free):
        return float(np.linalg.norm((R * self._row_scale)[free]))

    # -- nonlinear solve -------------------------------------------------
    def _newton(self, w, alpha, load, settings, ref):
        free = self.dofmap.free
        history = []
        for it in range(settings.max_newton + 1):
            R, J = self.residual_and_jacobian(w, alpha, load)
            rnorm = self._norm(R, free)
            history.append(rnorm / ref)
            if not np.isfinite(rnorm):
                raise SolverError("non-finite flow residual", history)
            if rnorm / ref < settings.newton_tol:
                return w, it, history
            if it == settings.max_newton:
                break
            try:
                lu = splu(J[free][:, free].tocsc())
            except RuntimeError as exc:
                raise SolverError(f"singular flow Jacobian: {exc}", history) from exc
            dw = np.zeros_like(w)
            dw[free] = -lu.solve(R[free])
            step = 1.0
            for _ in range(settings.max_line_search):
                trial = w + step * dw
                tnorm = self._norm(self.residual(trial, alpha, load), free)
                if np.isfinite(tnorm) and tnorm < (1.0 - 1e-4 * step) * rnorm:
                    break
                step *= 0.5
            else:
                raise SolverError("flow line search stalled", history)
            w = trial
        raise SolverError(f"Newton did not converge in {settings.max_newton} iterations", history)

    def solve(self, alpha, settings: FlowSettings | None = None, initial: np.ndarray | None = None) -> FlowState:
        """Newton solve; on failure retry from rest with load continuation."""
        settings = settings or FlowSettings()
        w0 = self.initial_state()
        ref = self._norm(self.residual(w0, alpha), self.dofmap.free)
        if ref == 0.0:
            return FlowState(w0, self.dofmap, 0, [0.0])
        start = w0 if initial is None else np.where(self.dofmap.fixed, self.dofmap.fixed_values, initial)
        try:
            w, its, hist = self._newton(start, alpha, 1.0, settings, ref)
            return FlowState(w, self.dofmap, its, hist)
        except SolverError as exc:
            log.info("flow Newton failed (%s); retrying with load continuation", exc)
            history = list(exc.history)
        w, total = w0, 0
        for load in settings.continuation:
            load_ref = self._norm(self.residual(w0, alpha, load), self.dofmap.free)
            try:
                w, its, hist = self._newton(w, alpha, load, settings, load_ref)
            except SolverError as exc:
                raise SolverError(f"flow solve failed at load fraction {load}: {exc}",
                                  history + exc.history) from exc
            total += its
            history += hist
        return FlowState(w, self.dofmap, total, history)


def flow_rate(state: FlowState, mesh: StructuredMesh, segment: str) -> float:
    """Outward volumetric rate per unit depth through a boundary segment."""
    edges = mesh.segment_edges(segment)
    normal = mesh.segment_normal(segment)
    u = state.u
    xy = mesh.coords
    lengths = np.linalg.norm(xy[edges[:, 1]] - xy[edges[:, 0]], axis=1)
    un = (u[edges[:, 0]] + u[edges[:, 1]]) @ normal * 0.5
    return float(np.sum(un * lengths))
