"""Inner convex problem: minimize the objective over potentials at fixed layout.

For the linear law this is a symmetric positive definite system (two-material
diffusion with coefficient ``mu*rho + (1-rho)``) solved by Jacobi-preconditioned
conjugate gradients.  For nonlinear laws a damped Newton iteration with Armijo
backtracking is used; strict convexity of the cell integrand makes the limit
unique.  Relaxed layouts with values inside (0, 1) are allowed, the coefficient
then interpolates between the two materials.
"""

from __future__ import annotations

import dataclasses
import functools
import time

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from . import grid as g_
from . import maglaw as ml
from .energies import PhysicalParams, saddle_objective


class IllPosedError(Exception):
    """The requested layout is outside the unit box."""


class NonConvergenceError(Exception):
    """Iteration cap reached; carries the best iterate and its report."""

    def __init__(self, message: str, best, report):
        super().__init__(message)
        self.best = best
        self.report = report


@dataclasses.dataclass
class InnerReport:
    iterations: int
    residual: float
    objective: float
    wallclock: float


@functools.lru_cache(maxsize=16)
def _gradient_matrix(spec: g_.DomainSpec) -> sp.csr_matrix:
    return g_.gradient_matrix(spec)


@functools.lru_cache(maxsize=16)
def _free_indices(spec: g_.DomainSpec) -> np.ndarray:
    return np.flatnonzero(~g_.lateral_node_mask(spec).ravel())


def _drive_rhs(spec: g_.DomainSpec, params: PhysicalParams) -> np.ndarray:
    """Load vector of the drive term, on free nodes."""
    ez = np.zeros(spec.cell_shape + (spec.dim,))
    ez[..., -1] = params.mu_drive
    full = spec.cell_measure * g_.cell_gradient_adjoint(spec, ez)
    return full.ravel()[_free_indices(spec)]


def _assemble_system(spec: g_.DomainSpec, coeff: np.ndarray) -> sp.csr_matrix:
    """meas * G^T diag(coeff) G restricted to free nodes (coeff per cell)."""
    G = _gradient_matrix(spec)
    w = np.repeat(coeff.ravel(), spec.dim) * spec.cell_measure
    A = (G.T.multiply(w) @ G).tocsr()
    free = _free_indices(spec)
    return A[free][:, free]


def _assemble_hessian(spec: g_.DomainSpec, law: ml.MagnetizationLaw,
                      rho: np.ndarray, grad: np.ndarray) -> sp.csr_matrix:
    """Newton matrix with per-cell blocks rho*(mu I + (mu'/s) g g^T) + (1-rho) I."""
    d = spec.dim
    n = spec.n_cells
    s = np.sqrt(np.sum(grad * grad, axis=-1)).ravel()
    mu = np.asarray(ml.permeability(law, s))
    ratio = np.asarray(ml.permeability_slope_ratio(law, s))
    gv = grad.reshape(n, d)
    rho_f = rho.ravel()
    blocks = np.einsum("ca,cb->cab", gv, gv) * (rho_f * ratio)[:, None, None]
    diag = rho_f * mu + (1.0 - rho_f)
    blocks += diag[:, None, None] * np.eye(d)[None, :, :]
    B = sp.bsr_matrix((blocks, np.arange(n), np.arange(n + 1)), shape=(n * d, n * d))
    G = _gradient_matrix(spec)
    A = (G.T @ B @ G).tocsr() * spec.cell_measure
    free = _free_indices(spec)
    return A[free][:, free]


def objective_and_gradient(spec: g_.DomainSpec, law: ml.MagnetizationLaw,
                           params: PhysicalParams, rho: np.ndarray,
                           u: np.ndarray) -> tuple[float, np.ndarray]:
    """Objective value and its node-based gradient (zero on pinned nodes)."""
    grad = g_.cell_gradient(spec, u)
    s = np.sqrt(np.sum(grad * grad, axis=-1))
    coeff = rho * ml.permeability(law, s) + (1.0 - rho)
    flux = coeff[..., None] * grad
    flux[..., -1] -= params.mu_drive
    gu = spec.cell_measure * g_.cell_gradient_adjoint(spec, flux)
    gu[g_.lateral_node_mask(spec)] = 0.0
    return saddle_objective(spec, law, params, u, rho), gu


def _embed(spec: g_.DomainSpec, x_free: np.ndarray) -> np.ndarray:
    u = np.zeros(int(np.prod(spec.node_shape)))
    u[_free_indices(spec)] = x_free
    return u.reshape(spec.node_shape)


def minimize_potential(spec: g_.DomainSpec, law: ml.MagnetizationLaw,
                       params: PhysicalParams, rho: np.ndarray, tol: float = 1e-10,
                       max_iter: int = 10000, u0: np.ndarray | None = None
                       ) -> tuple[np.ndarray, InnerReport]:
    """Solve the inner problem min over potentials at fixed layout.

    Stops when the optimality residual drops below ``tol * (1 + ||rhs||)``.
    Raises :class:`IllPosedError` for layouts outside [0, 1] and
    :class:`NonConvergenceError` (carrying the best iterate) at the cap.
    """
    t0 = time.perf_counter()
    try:
        g_.validate_density(spec, rho)
    except ValueError as exc:
        raise IllPosedError(str(exc)) from exc
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    free = _free_indices(spec)
    x0 = None
    if u0 is not None:
        g_.validate_potential(spec, u0)
        x0 = u0.ravel()[free]

    if law.kind == "linear":
        coeff = law.mu_const * rho + (1.0 - rho)
        A = _assemble_system(spec, coeff)
        b = _drive_rhs(spec, params)
        inv_diag = 1.0 / A.diagonal()
        precond = spl.LinearOperator(A.shape, matvec=lambda v: inv_diag * v)
        count = {"n": 0}

        def _cb(_xk):
            count["n"] += 1

        x, info = spl.cg(A, b, x0=x0, rtol=tol, atol=tol, maxiter=max_iter,
                         M=precond, callback=_cb)
        u = _embed(spec, x)
        residual = float(np.linalg.norm(b - A @ x))
        report = InnerReport(iterations=count["n"], residual=residual,
                             objective=saddle_objective(spec, law, params, u, rho),
                             wallclock=time.perf_counter() - t0)
        if info != 0:
            raise NonConvergenceError(f"cg stopped after {count['n']} iterations", u, report)
        return u, report

    # Damped Newton for the nonlinear law.
    u = np.zeros(spec.node_shape) if u0 is None else u0.copy()
    rhs_norm = float(np.linalg.norm(_drive_rhs(spec, params)))
    value, grad_u = objective_and_gradient(spec, law, params, rho, u)
    iterations = 0
    stagnated = False
    while iterations < max_iter:
        gfree = grad_u.ravel()[free]
        residual = float(np.linalg.norm(gfree))
        if residual <= tol * (1.0 + rhs_norm):
            return u, InnerReport(iterations=iterations, residual=residual,
                                  objective=value,
                                  wallclock=time.perf_counter() - t0)
        if stagnated:
            break
        H = _assemble_hessian(spec, law, rho, g_.cell_gradient(spec, u))
        step_free = spl.spsolve(H.tocsc(), -gfree)
        step = _embed(spec, step_free)
        slope = float(gfree @ step_free)
        # Armijo backtracking; the objective is strictly convex so the unit
        # Newton step is accepted near the solution.
        t = 1.0
        for _ in range(60):
            candidate = u + t * step
            cand_value = saddle_objective(spec, law, params, candidate, rho)
            if cand_value <= value + 1e-4 * t * slope:
                break
            t *= 0.5
        # No representable descent left: one last residual check, then stop.
        stagnated = abs(t * slope) <= 1e-17 * (1.0 + abs(value))
        u = u + t * step
        value, grad_u = objective_and_gradient(spec, law, params, rho, u)
        iterations += 1
    residual = float(np.linalg.norm(grad_u.ravel()[free]))
    report = InnerReport(iterations=iterations, residual=residual, objective=value,
                         wallclock=time.perf_counter() - t0)
    reason = "stalled at the floating-point floor" if stagnated \
        else f"stopped after {max_iter} iterations"
    raise NonConvergenceError(f"newton {reason}", u, report)
