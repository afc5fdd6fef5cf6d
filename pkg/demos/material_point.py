"""Material point behaviour of the grown fibre-reinforced tissue.

Prints the stress under uniaxial stretch with and without growth and the
finite-difference check of the analytical stress and tangent.
"""
import numpy as np

from restenosim import constitutive as cm
from restenosim.cli import fd_errors

mat = cm.MaterialParams()
H = cm.structure_tensors(mat)

print("axial stretch   P_zz (theta = 1)   P_zz (theta = 1.05)")
for lam in (0.95, 1.0, 1.05, 1.1):
    F = np.diag([1.0, lam, 1.0])
    print(f"{lam:12.2f}   {cm.pk1_stress(F, 1.0, H, mat)[1, 1]:16.5f}   "
          f"{cm.pk1_stress(F, 1.05, H, mat)[1, 1]:18.5f}")

rng = np.random.default_rng(1)
F = np.eye(3) + 0.2 * rng.normal(size=(3, 3)) / 3
_, _, err_P, err_A = fd_errors(F, 1.08, H, mat, 3)
print(f"finite-difference check: stress error {err_P:.1e}, tangent error {err_A:.1e}")

# growth from a 33.1 % cell excess at fixed volume
print("theta after one increment:", cm.growth_stretch(1.0, 1.331, 1.0, 3))
