"""Exponential isotropic hyperelastic law with pressure-like stabilization.

The strain energy is W = (c / 2b) [exp(b (I1 - 3)) - 1] with
I1 = tr(F^T F), and the first Piola-Kirchhoff stress is

    P = c exp(b (I1 - 3)) F - p_s F^{-T},
    p_s = c exp(b (I1 - 3)) - beta_s log(I3),      I3 = det(F^T F),

so that P vanishes identically at F = I and the log(I3) term penalizes
any volume change.  In 2D a plane-strain convention is used: the
out-of-plane stretch is 1, so I1 gains +1 and I3 = det(F)^2, which keeps
W(I) = 0 and P(I) = 0 in planar scenes.

Stress units follow the unit of c (the module is unit-agnostic; kPa for
fitting against tissue data, dyn/cm^2 inside CGS dynamic scenes).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import ContractViolation, FitError

KPA_TO_CGS = 1.0e4  # dyn/cm^2 per kPa


@dataclass(frozen=True)
class ConstitutiveLaw:
    """Material parameters: stress scale c, exponent b, bulk penalty beta_s."""

    c: float
    b: float
    beta_s: float = 2.5e4

    def __post_init__(self):
        if self.c <= 0 or self.b <= 0 or self.beta_s <= 0:
            raise ContractViolation("constitutive parameters must be positive")

    def scaled(self, factor):
        """Same material with stress-like parameters multiplied by factor."""
        return ConstitutiveLaw(self.c * factor, self.b, self.beta_s * factor)


def _invariants(F):
    F = np.asarray(F, dtype=float)
    dim = F.shape[-1]
    J = np.linalg.det(F)
    I1 = np.einsum("...ij,...ij->...", F, F)
    if dim == 2:
        I1 = I1 + 1.0  # unit out-of-plane stretch
    return I1, J


def strain_energy(F, law):
    """Energy density W(F); raises for inverted deformations."""
    I1, J = _invariants(F)
    if np.any(J <= 0.0):
        raise ContractViolation("det F must be positive")
    return (law.c / (2.0 * law.b)) * (np.exp(law.b * (I1 - 3.0)) - 1.0)


def first_pk_stress(F, law):
    """First Piola-Kirchhoff stress; batched over leading axes of F."""
    F = np.asarray(F, dtype=float)
    I1, J = _invariants(F)
    if np.any(J <= 0.0):
        raise ContractViolation("det F must be positive")
    cexp = law.c * np.exp(law.b * (I1 - 3.0))
    # I3 = det(F^T F) = J^2 in both the 3D and plane-strain conventions
    p_s = cexp - law.beta_s * 2.0 * np.log(J)
    Finv_T = np.swapaxes(np.linalg.inv(F), -1, -2)
    return cexp[..., None, None] * F - p_s[..., None, None] * Finv_T


def stress_tangent(F, law):
    """dP/dF as a (..., dim, dim, dim, dim) tensor: A[iJkL] = dP_iJ / dF_kL."""
    F = np.asarray(F, dtype=float)
    dim = F.shape[-1]
    I1, J = _invariants(F)
    cexp = law.c * np.exp(law.b * (I1 - 3.0))
    p_s = cexp - law.beta_s * 2.0 * np.log(J)
    Finv = np.linalg.inv(F)
    Finv_T = np.swapaxes(Finv, -1, -2)
    eye = np.eye(dim)
    batch = F.shape[:-2]
    A = np.zeros(batch + (dim, dim, dim, dim))
    A += cexp[..., None, None, None, None] * np.einsum(
        "ik,JL->iJkL", eye, eye, optimize=True
    )
    A += 2.0 * law.b * cexp[..., None, None, None, None] * np.einsum(
        "...iJ,...kL->...iJkL", F, F, optimize=True
    )
    dps = 2.0 * law.b * cexp[..., None, None] * F - 2.0 * law.beta_s * Finv_T
    A -= np.einsum("...iJ,...kL->...iJkL", Finv_T, dps, optimize=True)
    A += p_s[..., None, None, None, None] * np.einsum(
        "...iL,...kJ->...iJkL", Finv_T, Finv_T, optimize=True
    )
    return A


def equibiaxial_stress(stretch, c, b):
    """Equibiaxial Cauchy stress of the incompressible thin-sheet model.

    Plane stress with lambda_x = lambda_y = lambda and lambda_z =
    lambda^-2; the reaction pressure is eliminated through sigma_zz = 0:

        sigma = c exp(b (I1 - 3)) (lambda^2 - lambda^-4),
        I1 = 2 lambda^2 + lambda^-4.
    """
    lam = np.asarray(stretch, dtype=float)
    I1 = 2.0 * lam ** 2 + lam ** -4
    return c * np.exp(b * (I1 - 3.0)) * (lam ** 2 - lam ** -4)


def fit_parameters(data, initial=(10.0, 5.0), max_iter=200):
    """Least-squares fit of (c, b) to equibiaxial (stretch, stress) samples.

    Levenberg-Marquardt in (log c, log b) with an analytic Jacobian, which
    enforces positivity of both parameters.  Returns (c, b, residual_norm).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 4:
        raise FitError("need at least 4 (stretch, stress) samples")
    lam = data[:, 0]
    sigma = data[:, 1]
    if np.any(lam <= 1.0):
        raise FitError("stretches must exceed 1")

    I1 = 2.0 * lam ** 2 + lam ** -4
    geom = lam ** 2 - lam ** -4

    def residuals(q):
        c, b = np.exp(q)
        return c * np.exp(b * (I1 - 3.0)) * geom - sigma

    def jacobian(q):
        c, b = np.exp(q)
        model = c * np.exp(b * (I1 - 3.0)) * geom
        return np.column_stack([model, model * (I1 - 3.0) * b])

    q0 = np.log(np.asarray(initial, dtype=float))
    result = least_squares(
        residuals, q0, jac=jacobian, method="lm", max_nfev=max_iter, xtol=1e-14,
        ftol=1e-14, gtol=1e-14,
    )
    if not result.success and result.status <= 0:
        raise FitError(f"fit did not converge: {result.message}")
    c, b = np.exp(result.x)
    return float(c), float(b), float(np.linalg.norm(result.fun))


def read_fit_data(path):
    """CSV with header `stretch,stress_kPa`; returns an (n, 2) array."""
    rows = []
    with open(path) as f:
        header = f.readline()
        if "stretch" not in header:
            raise FitError(f"unrecognized fit data header: {header.strip()!r}")
        for line in f:
            line = line.strip()
            if line:
                lam, sig = line.split(",")
                rows.append((float(lam), float(sig)))
    return np.array(rows)


def write_fit_result(path, c, b, residual):
    with open(path, "w") as f:
        f.write("c_kPa,b,residual\n")
        f.write(f"{c!r},{b!r},{residual!r}\n")
