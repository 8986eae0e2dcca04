"""Design parameterizations and the per-quadrature-point material cache.

A parameterization maps a scaled design vector ``x`` to ``gamma`` at every
Gauss point and supplies ``d gamma / d x`` for the chain rule.  Two are
provided: explicit components (analytic gamma at Gauss points) and element
densities (piecewise-constant gamma, optional linear density filter).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import (ComponentBounds, ComponentSet, DesignVector, gamma_at, gamma_gradient_at,
                       pack_design, unpack_design)
from .materials import MaterialFields, RampParameters
from .mesh import StructuredMesh


@dataclass
class QuadratureCache:
    """Material fields at every Gauss point for one design, shape ``(n_elements, 4)``."""

    mesh: StructuredMesh
    material: MaterialFields
    dgamma_dx: object = None  # (n_qp, n_vars), dense or sparse; None if not requested

    @property
    def gamma(self) -> np.ndarray:
        return self.material.gamma


def evaluate_material_cache(mesh: StructuredMesh, design, ramp: RampParameters,
                            mask: str = "both", width: float | None = None) -> QuadratureCache:
    """Evaluate gamma and interpolated properties for a component set or density field.

    ``design`` is a :class:`ComponentSet` (analytic gamma at the Gauss points),
    an array of per-element densities, or ``None`` (all fluid).  ``width``
    selects the smoothed component projection (see :func:`gamma_at`).
    """
    if design is None:
        gamma = np.ones((mesh.n_elements, 4))
    elif isinstance(design, ComponentSet):
        gamma = gamma_at(design, mesh.qp_coords(), mask, width)
    else:
        rho = np.asarray(design, dtype=float).reshape(mesh.n_elements)
        gamma = np.repeat(rho[:, None], 4, axis=1)
    return QuadratureCache(mesh, MaterialFields.from_gamma(gamma, ramp))


class ComponentDesign:
    """Scaled component variables of one stage.

    ``stage`` picks the optimized kinds (``walls``, ``fins`` or ``both``);
    ``gamma_mask`` picks the kinds that enter gamma.  Walls-only stages exclude
    fins from gamma altogether.  ``width`` is the smoothing length of the
    sampled projection, or ``None`` for the pointwise tanh projection.
    """

    def __init__(self, mesh: StructuredMesh, components: ComponentSet, bounds: ComponentBounds,
                 stage: str, gamma_mask: str = "both", width: float | None = None):
        self.mesh, self.bounds, self.width = mesh, bounds, width
        self.stage, self.gamma_mask = stage, gamma_mask
        self.base = components
        self.vector = pack_design(components, stage, bounds)
        self._qp = mesh.qp_coords()

    @property
    def x0(self) -> np.ndarray:
        return self.vector.values.copy()

    @property
    def active(self) -> np.ndarray:
        return self.vector.stage_mask

    @property
    def labels(self) -> list[str]:
        return self.vector.labels

    def components(self, x) -> ComponentSet:
        return unpack_design(self.vector.with_values(x), self.base)

    def design_vector(self, x) -> DesignVector:
        return self.vector.with_values(x)

    def gamma(self, x, jacobian: bool = False):
        cset = self.components(x)
        if not jacobian:
            return gamma_at(cset, self._qp, self.gamma_mask, self.width), None
        gamma, grad = gamma_gradient_at(cset, self._qp, self.vector.mapping, self.gamma_mask, self.width)
        grad = grad.reshape(self.mesh.n_qp, -1) * self.vector.scale[None, :]
        grad[:, ~self.active] = 0.0
        return gamma, grad


def density_filter_matrix(mesh: StructuredMesh, radius: float) -> sp.csr_matrix:
    """Row-normalized linear cone filter over element centers."""
    centers = mesh.element_centers()
    rx, ry = int(np.ceil(radius / mesh.dx)), int(np.ceil(radius / mesh.dy))
    ii, jj = np.meshgrid(np.arange(mesh.nx), np.arange(mesh.ny))
    ii, jj = ii.ravel(), jj.ravel()
    rows, cols, vals = [], [], []
    for di in range(-rx, rx + 1):
        for dj in range(-ry, ry + 1):
            i2, j2 = ii + di, jj + dj
            ok = (i2 >= 0) & (i2 < mesh.nx) & (j2 >= 0) & (j2 < mesh.ny)
            e1 = (jj * mesh.nx + ii)[ok]
            e2 = (j2 * mesh.nx + i2)[ok]
            d = np.linalg.norm(centers[e1] - centers[e2], axis=1)
            w = np.maximum(radius - d, 0.0)
            keep = w > 0
            rows.append(e1[keep]), cols.append(e2[keep]), vals.append(w[keep])
    W = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(mesh.n_elements, mesh.n_elements))
    return sp.diags(1.0 / np.asarray(W.sum(axis=1)).ravel()) @ W


class DensityDesign:
    """One density per element in ``[0, 1]``; gamma is constant on each element."""

    def __init__(self, mesh: StructuredMesh, initial: float | np.ndarray = 1.0,
                 filter_radius: float | None = None):
        self.mesh = mesh
        self._x0 = np.broadcast_to(np.asarray(initial, dtype=float), (mesh.n_elements,)).copy()
        self.filter = density_filter_matrix(mesh, filter_radius) if filter_radius else None
        ne = mesh.n_elements
        self._spread = sp.csr_matrix((np.ones(4 * ne), (np.arange(4 * ne), np.repeat(np.arange(ne), 4))),
                                     shape=(4 * ne, ne))

    @property
    def x0(self) -> np.ndarray:
        return self._x0.copy()

    @property
    def active(self) -> np.ndarray:
        return np.ones(self.mesh.n_elements, dtype=bool)

    @property
    def labels(self) -> list[str]:
        return [f"element{e}" for e in range(self.mesh.n_elements)]

    def densities(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.filter @ x if self.filter is not None else x

    def gamma(self, x, jacobian: bool = False):
        rho = self.densities(x)
        gamma = np.repeat(rho[:, None], 4, axis=1)
        if not jacobian:
            return gamma, None
        jac = self._spread @ self.filter if self.filter is not None else self._spread
        return gamma, jac
