"""Uniform structured mesh of bilinear quadrilaterals and assembly helpers.

Nodes are numbered row by row, ``node(i, j) = j * (nx + 1) + i``; element
``(i, j)`` has counter-clockwise nodes starting at its lower-left corner.
Since every element is the same rectangle, shape-function gradients and
quadrature weights are shared by all elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import MeshError

GAUSS = 1.0 / np.sqrt(3.0)
# (xi, eta) of the 2x2 Gauss rule, counter-clockwise
REF_QP = np.array([[-GAUSS, -GAUSS], [GAUSS, -GAUSS], [GAUSS, GAUSS], [-GAUSS, GAUSS]])
REF_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_functions(xi, eta):
    """Q1 shape values ``(..., 4)`` and reference gradients ``(..., 4, 2)``."""
    xi = np.asarray(xi, dtype=float)[..., None]
    eta = np.asarray(eta, dtype=float)[..., None]
    sx, sy = REF_NODES[:, 0], REF_NODES[:, 1]
    N = 0.25 * (1 + sx * xi) * (1 + sy * eta)
    dN = np.stack([0.25 * sx * (1 + sy * eta), 0.25 * sy * (1 + sx * xi)], axis=-1)
    return N, dN


@dataclass
class StructuredMesh:
    Lx: float
    Ly: float
    nx: int
    ny: int
    coords: np.ndarray
    elements: np.ndarray
    segments: dict[str, np.ndarray]
    spans: dict[str, tuple[float, float]] = field(default_factory=dict)

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    @property
    def h(self) -> float:
        """Characteristic element size used by the stabilization."""
        return float(np.sqrt(self.dx * self.dy))

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def n_qp(self) -> int:
        return 4 * self.n_elements

    @property
    def element_area(self) -> float:
        return self.dx * self.dy

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    # reference data shared by every element
    @property
    def N(self) -> np.ndarray:
        return shape_functions(REF_QP[:, 0], REF_QP[:, 1])[0]

    @property
    def dN(self) -> np.ndarray:
        """Physical shape gradients at the Gauss points, ``(4 qp, 4 nodes, 2)``."""
        dN = shape_functions(REF_QP[:, 0], REF_QP[:, 1])[1].copy()
        dN[..., 0] *= 2.0 / self.dx
        dN[..., 1] *= 2.0 / self.dy
        return dN

    @property
    def weights(self) -> np.ndarray:
        return np.full(4, self.element_area / 4.0)

    def qp_coords(self) -> np.ndarray:
        """Physical Gauss-point coordinates, ``(n_elements, 4, 2)``."""
        return np.einsum("qa,ead->eqd", self.N, self.coords[self.elements])

    def node_index(self, i, j):
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def to_qp(self, nodal: np.ndarray) -> np.ndarray:
        """Interpolate a nodal scalar field to ``(n_elements, 4)`` Gauss values."""
        return np.einsum("qa,ea->eq", self.N, nodal[self.elements])

    def element_centers(self) -> np.ndarray:
        return self.coords[self.elements].mean(axis=1)

    def integrate_qp(self, values: np.ndarray) -> float:
        return float(np.sum(values * self.weights))

    def segment_edges(self, name: str) -> np.ndarray:
        nodes = self.segment(name)
        return np.stack([nodes[:-1], nodes[1:]], axis=1)

    def segment(self, name: str) -> np.ndarray:
        try:
            return self.segments[name]
        except KeyError:
            raise KeyError(f"unknown boundary segment {name!r}") from None

    def segment_normal(self, name: str) -> np.ndarray:
        nodes = self.segment(name)
        xy = self.coords[nodes]
        if np.allclose(xy[:, 0], 0.0):
            return np.array([-1.0, 0.0])
        if np.allclose(xy[:, 0], self.Lx):
            return np.array([1.0, 0.0])
        if np.allclose(xy[:, 1], 0.0):
            return np.array([0.0, -1.0])
        if np.allclose(xy[:, 1], self.Ly):
            return np.array([0.0, 1.0])
        raise MeshError(f"segment {name!r} is not on a single side")

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(np.concatenate([self.segments[s] for s in ("left", "right", "bottom", "top")]))


def _snap_span(span, Ly, ny, name):
    lo, hi = span
    if not (0.0 <= lo < hi <= 1.0):
        raise MeshError(f"{name} span {span} must satisfy 0 <= lo < hi <= 1 (fractions of Ly)")
    j0, j1 = int(round(lo * ny)), int(round(hi * ny))
    if j1 <= j0:
        raise MeshError(f"{name} span {span} is narrower than one element")
    return j0, j1


def build_mesh(Lx: float = 10e-3, Ly: float = 7e-3, nx: int = 120, ny: int = 84,
               inlet=(0.80, 0.95), outlet=(0.05, 0.20)) -> StructuredMesh:
    """Uniform grid with inlet and outlet spans (fractions of ``Ly``) on ``x = 0``.

    Span ends snap to the nearest node row.
    """
    if not (Lx > 0 and Ly > 0):
        raise MeshError("domain dimensions must be positive")
    if nx < 1 or ny < 1:
        raise MeshError("element counts must be positive")
    xs = np.linspace(0.0, Lx, nx + 1)
    ys = np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    coords = np.column_stack([X.ravel(), Y.ravel()])

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    n0 = (j * (nx + 1) + i).ravel()
    elements = np.column_stack([n0, n0 + 1, n0 + nx + 2, n0 + nx + 1])

    rows = np.arange(ny + 1) * (nx + 1)
    segments = {
        "left": rows.copy(),
        "right": rows + nx,
        "bottom": np.arange(nx + 1),
        "top": ny * (nx + 1) + np.arange(nx + 1),
    }
    spans = {}
    ji = _snap_span(inlet, Ly, ny, "inlet")
    jo = _snap_span(outlet, Ly, ny, "outlet")
    if not jo[1] < ji[0]:
        raise MeshError("outlet span must lie strictly below the inlet span")
    for name, (j0, j1) in (("inlet", ji), ("outlet", jo)):
        segments[name] = rows[j0:j1 + 1].copy()
        spans[name] = (j0 * Ly / ny, j1 * Ly / ny)
    mesh = StructuredMesh(Lx, Ly, nx, ny, coords, elements, segments, spans)
    if mesh.element_area <= 0:
        raise MeshError("non-positive element area")
    return mesh


# ---------------------------------------------------------------------------
# sparse assembly

class SparsePattern:
    """Fixed CSR sparsity for element matrices with dof table ``edofs``.

    Element contributions are scattered into the CSR data array with a
    precomputed index, so repeated assembly is a single ``bincount``.
    """

    def __init__(self, row_dofs: np.ndarray, col_dofs: np.ndarray, n_rows: int, n_cols: int):
        self.shape = (n_rows, n_cols)
        nr, nc = row_dofs.shape[1], col_dofs.shape[1]
        rows = np.repeat(row_dofs[:, :, None], nc, axis=2).ravel()
        cols = np.repeat(col_dofs[:, None, :], nr, axis=1).ravel()
        keys = rows.astype(np.int64) * n_cols + cols
        unique, self._scatter = np.unique(keys, return_inverse=True)
        self.indices = (unique % n_cols).astype(np.int32)
        urows = unique // n_cols
        self.indptr = np.searchsorted(urows, np.arange(n_rows + 1)).astype(np.int32)
        self.nnz = len(unique)

    def assemble(self, element_matrices: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._scatter, weights=element_matrices.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def assemble_vector(edofs: np.ndarray, element_vectors: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(edofs.ravel(), weights=element_vectors.ravel(), minlength=n)


@dataclass
class DofMap:
    """Interleaved nodal dofs: ``dof = n_fields * node + field``."""

    fields: tuple[str, ...]
    n_nodes: int
    fixed: np.ndarray = None
    fixed_values: np.ndarray = None

    def __post_init__(self):
        if self.fixed is None:
            self.fixed = np.zeros(self.n_dofs, dtype=bool)
        if self.fixed_values is None:
            self.fixed_values = np.zeros(self.n_dofs)

    @property
    def n_fields(self) -> int:
        return len(self.fields)

    @property
    def n_dofs(self) -> int:
        return self.n_fields * self.n_nodes

    def dofs(self, name: str, nodes) -> np.ndarray:
        return self.n_fields * np.asarray(nodes) + self.fields.index(name)

    def element_dofs(self, elements: np.ndarray) -> np.ndarray:
        """``(n_elements, 4 * n_fields)`` ordered node-major."""
        k = self.n_fields
        return (k * elements[:, :, None] + np.arange(k)).reshape(len(elements), -1)

    def constrain(self, name: str, nodes, value) -> None:
        d = self.dofs(name, nodes)
        self.fixed[d] = True
        self.fixed_values[d] = value

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed)

    @property
    def n_fixed(self) -> int:
        return int(self.fixed.sum())

    def field_values(self, vector: np.ndarray, name: str) -> np.ndarray:
        return vector[self.fields.index(name)::self.n_fields]


def apply_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    """Eliminate constrained rows and columns.

    Returns the reduced matrix and right-hand side on the free dofs together
    with the free index array.  ``fixed`` is a boolean mask.
    """
    matrix = sp.csr_matrix(matrix)
    free = np.flatnonzero(~fixed)
    cons = np.flatnonzero(fixed)
    K_ff = matrix[free][:, free]
    b_f = rhs[free] - matrix[free][:, cons] @ values[cons]
    return K_ff.tocsc(), b_f, free


def solve_dirichlet(matrix, rhs, fixed, values, solver=None) -> np.ndarray:
    """Solve with Dirichlet elimination; constrained entries equal ``values``."""
    from scipy.sparse.linalg import spsolve

    x = np.array(values, dtype=float)
    K_ff, b_f, free = apply_dirichlet(matrix, rhs, fixed, x)
    if len(free):
        x[free] = (solver or spsolve)(K_ff, b_f)
    return x
