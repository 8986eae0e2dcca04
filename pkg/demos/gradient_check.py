# Adjoint gradient against finite differences.
#
# The discrete adjoint runs the thermal solve backwards first, then the
# flow solve.  Here it is compared with Richardson-extrapolated central
# differences for every variable of a small design: two walls and two fins.
# Fins much smaller than an element barely change J; their entries then sit
# at the finite-difference round-off floor (about 1e-7 here), which is why
# the fins below are made larger than the default.

import numpy as np

from coolopt.cache import ComponentDesign
from coolopt.geometry import ComponentBounds, initial_layout
from coolopt.materials import PhysicalProperties, RampParameters
from coolopt.mesh import build_mesh
from coolopt.objective import ThermofluidModel, adjoint_gradient, design_objective, fd_gradient_oracle

props = PhysicalProperties()
mesh = build_mesh(10e-3, 7e-3, 30, 21)
model = ThermofluidModel(mesh, props, RampParameters.defaults(props, mesh.Lx), p_in=200.0)

cset = initial_layout(mesh.Lx, mesh.Ly, walls_grid=(2, 1), fins_grid=(2, 1), fin_semi_major=0.05)
design = ComponentDesign(mesh, cset, ComponentBounds.defaults(mesh.Lx, mesh.Ly), "both", "both", 0.5 * mesh.h)
x = design.x0

report = adjoint_gradient(model, design, x)
idx = list(range(len(x)))
fd, failed = fd_gradient_oracle(design_objective(model, design), x, idx)

print(f"{'variable':<22s}{'adjoint':>14s}{'finite diff':>14s}{'rel. error':>12s}")
for i in idx:
    err = abs(report.gradient[i] - fd[i]) / max(abs(fd[i]), 1e-300)
    print(f"{design.labels[i]:<22s}{report.gradient[i]:>14.6e}{fd[i]:>14.6e}{err:>12.2e}")
print("adjoint residuals:", {k: f"{v:.1e}" for k, v in report.adjoint_residuals.items()})
print("largest relative error:", np.nanmax(np.abs(report.gradient - fd) / np.abs(fd)))
