"""Growth kinematics and the anisotropic hyperelastic wall material.

Growth is isotropic, ``F_g = theta * I`` over the growing directions, so the
elastic right Cauchy-Green tensor is ``C_e = C / theta**2``. In plane strain
with a two-dimensional growth law (``growth_dim=2``) only the in-plane
directions grow. The strain energy is a compressible neo-Hookean ground
matrix plus two dispersed collagen families acting in tension only:

    psi = mu/2 (tr C_e - 3) - mu ln J_e + lam/4 (J_e^2 - 1 - 2 ln J_e)
          + k1/(2 k2) sum_i (exp(k2 <E_i>^2) - 1),   E_i = H_i : C_e - 1

All tensors are 3x3 and functions broadcast over leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXP_LIMIT = 700.0


class StepRejected(ArithmeticError):
    """The requested state is outside the admissible range; cut the step."""


@dataclass(frozen=True)
class MaterialParams:
    mu: float = 0.02          # MPa
    lam: float = 10.0         # MPa
    k1: float = 0.112         # MPa
    k2: float = 20.61
    kappa: float = 0.1        # fibre dispersion
    theta_deg: float = 41.0   # fibre angle from the circumferential direction

    def __post_init__(self):
        for name in ("mu", "lam", "k1", "k2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"material parameter {name} must be > 0")
        if not 0.0 <= self.kappa <= 1.0 / 3.0:
            raise ValueError("dispersion kappa must lie in [0, 1/3]")


def fiber_directions(theta_deg: float, axial_axis: int) -> np.ndarray:
    """Unit fibre vectors ``a01, a02``, shape (2, 3).

    The fibres lie in the axial-circumferential plane at ``+-theta`` from
    the circumferential direction (index 2, out of the section plane).
    """
    t = np.deg2rad(theta_deg)
    a = np.zeros((2, 3))
    a[:, 2] = np.cos(t)
    a[0, axial_axis] = np.sin(t)
    a[1, axial_axis] = -np.sin(t)
    return a


def structure_tensors(mat: MaterialParams, axial_axis: int = 1) -> np.ndarray:
    """``H_i = kappa I + (1 - 3 kappa) a0i x a0i``, shape (2, 3, 3)."""
    a = fiber_directions(mat.theta_deg, axial_axis)
    return mat.kappa * np.eye(3) + (1 - 3 * mat.kappa) * np.einsum("fi,fj->fij", a, a)


def growth_stretch(J, rho_S, rho_S_h, d):
    """Total growth stretch ``(1 + J (rho_S/rho_S_h - 1))**(1/d)``."""
    return growth_stretch_incremental(1.0, J, 1.0, rho_S, rho_S_h, d)


def growth_stretch_incremental(theta_prev, J, J_prev, rho_S, rho_S_h, d):
    """``theta_prev * (1 + J/J_prev * (rho_S/rho_S_h - 1))**(1/d)``.

    Raises ``StepRejected`` when the bracket is not positive.
    """
    base = 1.0 + np.asarray(J) / J_prev * (np.asarray(rho_S) / rho_S_h - 1.0)
    if np.any(base <= 0):
        raise StepRejected("growth law base is not positive (SMC depletion)")
    return theta_prev * base ** (1.0 / d)


def dtheta_dJ(theta_prev, J, J_prev, rho_S, rho_S_h, d):
    base = 1.0 + np.asarray(J) / J_prev * (np.asarray(rho_S) / rho_S_h - 1.0)
    return theta_prev / d * base ** (1.0 / d - 1.0) * (np.asarray(rho_S) / rho_S_h - 1.0) / J_prev


@dataclass(frozen=True)
class Kinematics:
    F: np.ndarray
    C: np.ndarray
    J: np.ndarray
    Ce: np.ndarray
    Je: np.ndarray
    g: np.ndarray  # diagonal of F_g^{-1}


def _growth_mask(growth_dim: int) -> np.ndarray:
    if growth_dim == 3:
        return np.ones(3)
    if growth_dim == 2:
        return np.array([1.0, 1.0, 0.0])
    raise ValueError("growth_dim must be 2 or 3")


def kinematics(F, theta, growth_dim: int = 3) -> Kinematics:
    F = np.asarray(F, dtype=float)
    theta = np.asarray(theta, dtype=float)
    mask = _growth_mask(growth_dim)
    g = theta[..., None] ** (-mask)
    C = np.einsum("...ki,...kj->...ij", F, F)
    J = np.linalg.det(F)
    Ce = g[..., :, None] * C * g[..., None, :]
    Je = J * np.prod(g, axis=-1)
    return Kinematics(F, C, J, Ce, Je, g)


def _fibre_strain(Ce, H):
    return np.einsum("fij,...ij->...f", H, Ce) - 1.0


def free_energy(F, theta, H, mat: MaterialParams, growth_dim: int = 3):
    k = kinematics(F, theta, growth_dim)
    if np.any(k.Je <= 0):
        raise StepRejected("non-positive elastic volume ratio")
    lnJ = np.log(k.Je)
    tr = np.trace(k.Ce, axis1=-2, axis2=-1)
    psi = (0.5 * mat.mu * (tr - 3.0) - mat.mu * lnJ
           + 0.25 * mat.lam * (k.Je ** 2 - 1.0 - 2.0 * lnJ))
    E = np.maximum(_fibre_strain(k.Ce, H), 0.0)
    arg = mat.k2 * E ** 2
    if np.any(arg > EXP_LIMIT):
        raise StepRejected("fibre exponent overflow")
    return psi + mat.k1 / (2 * mat.k2) * np.sum(np.expm1(arg), axis=-1)


def _elastic_response(k: Kinematics, H, mat: MaterialParams, tangent: bool):
    """Second PK stress and elasticity tensor with respect to ``C_e``."""
    if np.any(k.Je <= 0):
        raise StepRejected("non-positive elastic volume ratio")
    I = np.eye(3)
    Ci = np.linalg.inv(k.Ce)
    J2 = k.Je ** 2
    S = mat.mu * (I - Ci) + (0.5 * mat.lam * (J2 - 1.0))[..., None, None] * Ci
    E = _fibre_strain(k.Ce, H)
    Ep = np.maximum(E, 0.0)
    arg = mat.k2 * Ep ** 2
    if np.any(arg > EXP_LIMIT):
        raise StepRejected("fibre exponent overflow")
    ex = np.exp(arg)
    S = S + 2 * mat.k1 * np.einsum("...f,fij->...ij", Ep * ex, H)
    if not tangent:
        return S, None
    CiCi = np.einsum("...ij,...kl->...ijkl", Ci, Ci)
    sym = 0.5 * (np.einsum("...ik,...jl->...ijkl", Ci, Ci)
                 + np.einsum("...il,...jk->...ijkl", Ci, Ci))
    CC = ((mat.lam * J2)[..., None, None, None, None] * CiCi
          + (2 * mat.mu - mat.lam * (J2 - 1.0))[..., None, None, None, None] * sym)
    w = np.where(E > 0, 4 * mat.k1 * (1 + 2 * mat.k2 * Ep ** 2) * ex, 0.0)
    CC = CC + np.einsum("...f,fij,fkl->...ijkl", w, H, H)
    return S, CC


def pk1_stress(F, theta, H, mat: MaterialParams, growth_dim: int = 3):
    """First Piola-Kirchhoff stress ``P = dpsi/dF`` at fixed ``theta``."""
    k = kinematics(F, theta, growth_dim)
    S, _ = _elastic_response(k, H, mat, tangent=False)
    St = k.g[..., :, None] * S * k.g[..., None, :]
    return np.einsum("...ik,...kj->...ij", k.F, St)


def stress_and_tangents(F, theta, H, mat: MaterialParams, growth_dim: int = 3):
    """``P``, ``dP/dF`` (fixed theta) and ``dP/dtheta``.

    ``dP/dF`` is indexed ``[..., i, J, k, L]`` = dP_iJ / dF_kL.
    """
    k = kinematics(F, theta, growth_dim)
    S, CC = _elastic_response(k, H, mat, tangent=True)
    g = k.g
    St = g[..., :, None] * S * g[..., None, :]
    CCt = (CC * g[..., :, None, None, None] * g[..., None, :, None, None]
           * g[..., None, None, :, None] * g[..., None, None, None, :])
    F = k.F
    P = np.einsum("...ik,...kj->...ij", F, St)
    dPdF = (np.einsum("ik,...lj->...ijkl", np.eye(3), St)
            + np.einsum("...iK,...kN,...KJLN->...iJkL", F, F, CCt))
    theta = np.asarray(theta, dtype=float)
    mask = _growth_mask(growth_dim)
    rate = (mask[:, None] + mask[None, :]) / theta[..., None, None]   # -(d/dtheta) log g_A g_B
    dCe = -rate * k.Ce
    dS = 0.5 * np.einsum("...ABCD,...CD->...AB", CC, dCe)
    dSt = -rate * St + g[..., :, None] * dS * g[..., None, :]
    dPdtheta = np.einsum("...ik,...kj->...ij", F, dSt)
    return P, dPdF, dPdtheta


def dtheta_dF(F, theta_prev, J_prev, rho_S, rho_S_h, d):
    """Gradient of the incremental growth law with respect to ``F`` (rho_S frozen)."""
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    dJ = dtheta_dJ(theta_prev, J, J_prev, rho_S, rho_S_h, d)
    FinvT = np.swapaxes(np.linalg.inv(F), -1, -2)
    return (dJ * J)[..., None, None] * FinvT


def material_tangent(F, theta, H, mat: MaterialParams, dtheta_dF_=None, growth_dim: int = 3):
    """``A = dP/dF + dP/dtheta (x) dtheta/dF``; ``dtheta_dF_=None`` freezes theta."""
    _, dPdF, dPdt = stress_and_tangents(F, theta, H, mat, growth_dim)
    if dtheta_dF_ is None:
        return dPdF
    return dPdF + np.einsum("...ij,...kl->...ijkl", dPdt, dtheta_dF_)
