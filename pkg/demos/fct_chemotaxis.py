"""Chemotactic transport of a cell front with and without flux correction.

A step profile of smooth muscle cells is carried down a linear matrix
gradient on a plane strip. The Galerkin scheme undershoots behind the
front, the flux-corrected scheme stays within the initial bounds.
"""
import numpy as np

from restenosim.mesh import structured_rectangle
from restenosim.transport import FieldState, TransportOptions, TransportParams, step_smc

mesh = structured_rectangle(6.0, 0.8, 60, 4, "plane")
x = mesh.node_coords[:, 0]
params = TransportParams(chi=1e21, kappa=0.0)
ecm = params.rho_E_th * (0.2 + 0.6 * x / 6.0)
pdgf = np.full(mesh.n_nodes, 1e-11)
rho0 = params.rho_S_h

for stabilization in ("none", "fct"):
    smc = np.where(x > 3.0, rho0, 0.0)
    opts = TransportOptions(stabilization=stabilization)
    for _ in range(20):
        smc = step_smc(mesh, FieldState(pdgf, ecm, smc), params, 0.01, options=opts)
    print(f"{stabilization:>5}: min {smc.min() / rho0:+.3e}  max {smc.max() / rho0:.4f}  (in units of rho_S,h)")

bottom = mesh.node_coords[:, 1] == 0.0
order = np.argsort(x[bottom])
print("front on the bottom edge after 0.2 day:")
for xi, s in zip(x[bottom][order][20:40:2], smc[bottom][order][20:40:2]):
    print(f"  x = {xi:4.1f} mm  rho_S / rho_S,h = {s / rho0:.3f}")
