"""Magnetization laws: permeability response, its coenergy primitive, growth
constants and the convex conjugate used by the linear-case duality checks.

Two laws are supported. The ``linear`` law has a constant permeability
``mu_const > 1``. The ``langevin`` law is the standard nonlinear saturation
response with saturation magnetization ``Ms`` and parameter ``gamma``; its
coenergy has the closed form

    M(s) = s^2/2 + Ms * (log(sinh(g s)) - log(s) - log(g)) / g,   g = gamma,

which both the evaluation and the tests rely on.  All functions accept
scalars or numpy arrays and are even in the field argument ``s``.
"""

from __future__ import annotations

import dataclasses

import numpy as np

# Below this value of gamma*|s| the Langevin expressions switch to truncated
# series; coth(x) - 1/x loses every significant digit near zero, and the
# direct form is still down to ~1e-8 relative accuracy at 1e-4.  With terms
# through x^4 the series is exact to double precision on this range.
_SERIES_BRANCH = 1e-2

# Above this value of gamma*|s|, log(sinh(x)) is evaluated asymptotically to
# avoid overflow of sinh.
_ASYMPTOTIC_BRANCH = 20.0


@dataclasses.dataclass(frozen=True)
class MagnetizationLaw:
    """Parameters of a magnetization law.

    ``kind`` is ``"linear"`` (constant permeability ``mu_const``) or
    ``"langevin"`` (saturation magnetization ``Ms``, parameter ``gamma``).
    Unused parameters are ``None``.
    """

    kind: str
    mu_const: float | None = None
    Ms: float | None = None
    gamma: float | None = None

    def __post_init__(self) -> None:
        if self.kind == "linear":
            if self.mu_const is None or not self.mu_const > 1.0:
                raise ValueError(f"linear law needs mu_const > 1, got {self.mu_const}")
        elif self.kind == "langevin":
            if self.Ms is None or not self.Ms > 0.0:
                raise ValueError(f"langevin law needs Ms > 0, got {self.Ms}")
            if self.gamma is None or not self.gamma > 0.0:
                raise ValueError(f"langevin law needs gamma > 0, got {self.gamma}")
        else:
            raise ValueError(f"unknown law kind {self.kind!r}")

    @classmethod
    def linear(cls, mu_const: float) -> "MagnetizationLaw":
        return cls(kind="linear", mu_const=float(mu_const))

    @classmethod
    def langevin(cls, Ms: float, gamma: float) -> "MagnetizationLaw":
        return cls(kind="langevin", Ms=float(Ms), gamma=float(gamma))


def _as_array(s) -> tuple[np.ndarray, bool]:
    arr = np.asarray(s, dtype=float)
    return arr, arr.ndim == 0


def _ret(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _langevin_over_x(x: np.ndarray) -> np.ndarray:
    """(coth(x) - 1/x)/x for x >= 0, series-stabilized near zero."""
    out = np.empty_like(x)
    small = x < _SERIES_BRANCH
    xs = x[small]
    out[small] = 1.0 / 3.0 - xs * xs / 45.0 + 2.0 * xs ** 4 / 945.0
    xl = x[~small]
    out[~small] = (1.0 / np.tanh(xl) - 1.0 / xl) / xl
    return out


def _log_sinh_ratio(x: np.ndarray) -> np.ndarray:
    """log(sinh(x)/x) for x >= 0, overflow-safe and accurate near zero."""
    out = np.empty_like(x)
    small = x < _SERIES_BRANCH
    xs = x[small]
    out[small] = np.log1p(xs * xs / 6.0 + xs ** 4 / 120.0 + xs ** 6 / 5040.0)
    big = x > _ASYMPTOTIC_BRANCH
    xb = x[big]
    out[big] = xb - np.log(xb) - np.log(2.0) + np.log1p(-np.exp(-2.0 * xb))
    mid = ~small & ~big
    xm = x[mid]
    out[mid] = np.log(np.sinh(xm) / xm)
    return out


def permeability(law: MagnetizationLaw, s):
    """mu(s): the field-dependent permeability response. Even in s."""
    arr, scalar = _as_array(s)
    if law.kind == "linear":
        return _ret(np.full_like(arr, law.mu_const), scalar)
    x = law.gamma * np.abs(arr)
    return _ret(1.0 + law.Ms * law.gamma * _langevin_over_x(x), scalar)


def coenergy(law: MagnetizationLaw, s):
    """M(s) = integral of t*mu(t) from 0 to |s| (magnetic coenergy density)."""
    arr, scalar = _as_array(s)
    a = np.abs(arr)
    if law.kind == "linear":
        return _ret(0.5 * law.mu_const * a * a, scalar)
    x = law.gamma * a
    return _ret(0.5 * a * a + law.Ms / law.gamma * _log_sinh_ratio(x), scalar)


def coenergy_slope(law: MagnetizationLaw, s):
    """M'(s) = s*mu(s); odd, nondecreasing on s >= 0 because M is convex."""
    arr, scalar = _as_array(s)
    return _ret(arr * permeability(law, arr), scalar)


def permeability_slope_ratio(law: MagnetizationLaw, s):
    """mu'(s)/s, the rank-one Hessian weight of M(|grad u|).

    Finite at s = 0 (limit -2*Ms*gamma^3/45 for the Langevin law, 0 for the
    linear law); needed so Newton assembly stays well defined at zero-field
    cells.
    """
    arr, scalar = _as_array(s)
    if law.kind == "linear":
        return _ret(np.zeros_like(arr), scalar)
    x = law.gamma * np.abs(arr)
    h = np.empty_like(x)
    small = x < 1e-2
    xs = x[small]
    h[small] = -2.0 / 45.0 + 8.0 * xs * xs / 945.0 - 2.0 * xs ** 4 / 1575.0
    big = x > 30.0
    xb = x[big]
    h[big] = (2.0 / xb - 1.0) / xb ** 3
    mid = ~small & ~big
    xm = x[mid]
    h[mid] = (2.0 / xm - xm / np.sinh(xm) ** 2 - 1.0 / np.tanh(xm)) / xm ** 3
    return _ret(law.Ms * law.gamma ** 3 * h, scalar)


def growth_constant(law: MagnetizationLaw) -> float:
    """C_M with s^2/2 <= M(s) <= C_M s^2/2; equals mu for the linear law
    and 1 + gamma*Ms/3 for the Langevin law."""
    if law.kind == "linear":
        return law.mu_const
    return 1.0 + law.gamma * law.Ms / 3.0


def pressure_constant(law: MagnetizationLaw) -> float:
    """p0 = M(1) + mu(1)*(mu(1)/2 - 1); strictly positive for both laws."""
    mu1 = permeability(law, 1.0)
    return coenergy(law, 1.0) + mu1 * (0.5 * mu1 - 1.0)


def fenchel_conjugate(chi: float, mu_const: float, p):
    """Convex conjugate of the linear-case cell integrand.

    For f(xi) = (mu*chi/2 + (1-chi)/2)|xi|^2 - mu*e_z.xi the conjugate is
    f*(p) = (chi/(2 mu) + (1-chi)/2) |p + mu*e_z|^2, where e_z is the unit
    vector of the last coordinate. ``p`` has the vector components on its
    last axis.
    """
    parr = np.asarray(p, dtype=float)
    q = parr.copy()
    q[..., -1] += mu_const
    w = chi / (2.0 * mu_const) + (1.0 - chi) / 2.0
    out = w * np.sum(q * q, axis=-1)
    return float(out) if out.ndim == 0 else out
