"""Evaluation of the convex-concave objective and its relatives.

The central quantity is the saddle objective

    J(u, rho) = sum_cells [rho*M(|g|) + (1-rho)/2*|g|^2 - mu_drive*g_z] * meas
                - J2(rho),

where ``g`` is the per-cell gradient of the potential ``u`` and

    J2(rho) = sum_cells (b*z + p0)*rho * meas + tau * TV(rho)

collects gravity, pressure and perimeter.  The boundary drive enters in its
volume form ``-mu_drive * integral(u_z)``; by discrete telescoping this equals
the trapezoidal top/bottom trace form exactly, so no separate trace assembly
exists.

The linear-law energies (`stored_energy`, `dual_energy`, the dual field) and
the weak-divergence residual support the duality verification suite.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import grid as g_
from . import maglaw as ml


@dataclasses.dataclass(frozen=True)
class PhysicalParams:
    """Gravity b, surface tension tau, boundary drive, pressure constant.

    The drive may be zero (the degenerate no-field case used as an analytic
    reference); the remaining constants must be strictly positive.
    """

    b: float
    tau: float
    mu_drive: float
    p0: float

    def __post_init__(self) -> None:
        if not (self.b > 0.0 and self.tau > 0.0 and self.p0 > 0.0):
            raise ValueError("b, tau and p0 must be strictly positive")
        if self.mu_drive < 0.0:
            raise ValueError("mu_drive must be nonnegative")


def drive_integral(spec: g_.DomainSpec, u: np.ndarray) -> float:
    """Discrete integral of u_z over the container."""
    grad = g_.cell_gradient(spec, u)
    return float(grad[..., -1].sum() * spec.cell_measure)


def cyl_norm(spec: g_.DomainSpec, u: np.ndarray) -> float:
    """Norm of the potential: the L2 norm of its discrete gradient."""
    grad = g_.cell_gradient(spec, u)
    return float(np.sqrt(np.sum(grad * grad) * spec.cell_measure))


def field_energy(spec: g_.DomainSpec, law: ml.MagnetizationLaw, u: np.ndarray,
                 rho: np.ndarray) -> float:
    """Two-phase field energy: coenergy in the fluid, |g|^2/2 in the air."""
    grad = g_.cell_gradient(spec, u)
    s = np.sqrt(np.sum(grad * grad, axis=-1))
    dens = rho * ml.coenergy(law, s) + 0.5 * (1.0 - rho) * s * s
    return float(dens.sum() * spec.cell_measure)


def gravity_perimeter_cost(spec: g_.DomainSpec, params: PhysicalParams,
                           rho: np.ndarray) -> float:
    """J2: potential energy of the layout plus its perimeter cost."""
    zc = spec.cell_z()
    lin = float(((params.b * zc + params.p0) * rho).sum() * spec.cell_measure)
    return lin + params.tau * g_.total_variation(spec, rho)


def saddle_objective(spec: g_.DomainSpec, law: ml.MagnetizationLaw,
                     params: PhysicalParams, u: np.ndarray, rho: np.ndarray) -> float:
    """The convex-concave objective J(u, rho)."""
    return (field_energy(spec, law, u, rho)
            - params.mu_drive * drive_integral(spec, u)
            - gravity_perimeter_cost(spec, params, rho))


def gain_field(spec: g_.DomainSpec, law: ml.MagnetizationLaw, params: PhysicalParams,
               u: np.ndarray) -> np.ndarray:
    """Coefficient of rho in J at fixed u (per cell, without the TV part).

    g = M(|grad u|) - |grad u|^2/2 - b*z - p0.  Cellwise it satisfies
    g + b*z + p0 >= 0 because the coenergy dominates the quadratic.
    """
    grad = g_.cell_gradient(spec, u)
    s = np.sqrt(np.sum(grad * grad, axis=-1))
    return ml.coenergy(law, s) - 0.5 * s * s - params.b * spec.cell_z() - params.p0


def graph_objective(spec: g_.DomainSpec, law: ml.MagnetizationLaw,
                    params: PhysicalParams, u: np.ndarray, eta: np.ndarray) -> float:
    """Objective in graph form for an interface height field.

    The two phase integrals are split exactly at height eta within each cell
    column (the cell integrand uses the cell-center gradient), the interface
    area term uses one-sided differences of eta matching the TV family, and
    the drive uses the same volume form as the saddle objective.
    """
    g_.validate_height(spec, eta)
    grad = g_.cell_gradient(spec, u)
    s = np.sqrt(np.sum(grad * grad, axis=-1))
    fluid_dens = ml.coenergy(law, s)
    air_dens = 0.5 * s * s

    hz = spec.spacings[-1]
    z_low = -1.0 + hz * np.arange(spec.n_z)
    frac = np.clip((eta[..., None] - z_low) / hz, 0.0, 1.0)
    phase = float(((frac * fluid_dens + (1.0 - frac) * air_dens)).sum() * spec.cell_measure)

    drive = params.mu_drive * float(grad[..., -1].sum() * spec.cell_measure)

    col_measure = spec.cell_measure / hz
    gravity = float(((0.5 * params.b * eta ** 2 + params.p0 * eta)).sum() * col_measure)

    slope_sq = np.zeros_like(eta)
    for axis in range(spec.dim - 1):
        h = spec.spacings[axis]
        diff = np.zeros_like(eta)
        lo = [slice(None)] * (spec.dim - 1)
        hi = [slice(None)] * (spec.dim - 1)
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        diff[tuple(lo)] = (eta[tuple(hi)] - eta[tuple(lo)]) / h
        slope_sq += diff * diff
    area = float(np.sqrt(1.0 + slope_sq).sum() * col_measure)

    return phase - drive - gravity - params.tau * area


# --- linear-law energies for the duality suite ------------------------------

def stored_energy(spec: g_.DomainSpec, params: PhysicalParams, mu_const: float,
                  u: np.ndarray, chi: np.ndarray) -> float:
    """Quadratic stored energy of the potential for a binary layout."""
    grad = g_.cell_gradient(spec, u)
    s2 = np.sum(grad * grad, axis=-1)
    dens = 0.5 * (mu_const * chi + (1.0 - chi)) * s2
    return float(dens.sum() * spec.cell_measure) + gravity_perimeter_cost(spec, params, chi)


def total_energy(spec: g_.DomainSpec, params: PhysicalParams, mu_const: float,
                 u: np.ndarray, chi: np.ndarray) -> float:
    """Stored energy minus the drive work term."""
    return (stored_energy(spec, params, mu_const, u, chi)
            - params.mu_drive * drive_integral(spec, u))


def dual_energy(spec: g_.DomainSpec, params: PhysicalParams, mu_const: float,
                pstar: np.ndarray, chi: np.ndarray) -> float:
    """Energy of a dual flux field (the conjugate-side objective)."""
    q = pstar.copy()
    q[..., -1] -= params.mu_drive
    w = chi / (2.0 * mu_const) + (1.0 - chi) / 2.0
    dens = w * np.sum(q * q, axis=-1)
    return float(dens.sum() * spec.cell_measure) + gravity_perimeter_cost(spec, params, chi)


def dual_field_from_potential(spec: g_.DomainSpec, params: PhysicalParams,
                              mu_const: float, u: np.ndarray, chi: np.ndarray) -> np.ndarray:
    """Flux field p* = -(mu*chi + (1-chi)) grad(u) + mu_drive * e_z.

    When u solves the two-material problem for chi, p* is discretely
    weak-divergence-free and optimal for the dual energy.
    """
    grad = g_.cell_gradient(spec, u)
    coeff = mu_const * chi + (1.0 - chi)
    pstar = -coeff[..., None] * grad
    pstar[..., -1] += params.mu_drive
    return pstar


def weak_divergence_residual(spec: g_.DomainSpec, pstar: np.ndarray) -> float:
    """How far a cell flux field is from pairing to zero with all gradients.

    Returns ||meas * G^T p*|| over the free (non-pinned) nodes, normalized by
    the L2 norm of p*; zero iff p* is discretely weak-divergence-free
    against the pinned-node basis.
    """
    r = spec.cell_measure * g_.cell_gradient_adjoint(spec, pstar)
    r[g_.lateral_node_mask(spec)] = 0.0
    num = float(np.linalg.norm(r.ravel()))
    denom = float(np.sqrt(np.sum(pstar * pstar) * spec.cell_measure))
    return num / denom if denom > 0.0 else num
