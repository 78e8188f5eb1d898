"""Outer concave problem: best fluid layout for a frozen gain field.

Maximizes ``<gain, rho> - tau*TV(rho)`` over densities in [0, 1] with a fixed
volume.  For ``tau = 0`` this is the bathtub principle and is solved exactly
by sorting.  For ``tau > 0`` the equivalent convex minimization is solved by
a first-order primal-dual splitting per volume multiplier, with the scalar
multiplier located by bisection on the monotone map multiplier -> volume and
a final convex blend of the bracket endpoints that meets the volume exactly.
Binary layouts are recovered by thresholding at the volume-matching level.

Ties are always broken deterministically: cells are ordered by z-layer first,
then by the horizontal indices, so equal scores fill the lowest cells first.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import grid as g_


class InfeasibleVolumeError(Exception):
    """Target volume outside the open interval (0, |D|)."""


class OuterNonConvergenceError(Exception):
    """Primal-dual iteration cap reached; carries the best layout."""

    def __init__(self, message: str, best, report):
        super().__init__(message)
        self.best = best
        self.report = report


@dataclasses.dataclass
class OuterReport:
    iterations: int
    relaxed_value: float
    binary_value: float | None
    volume_error: float
    pd_residual: float
    multiplier: float
    dual_bound: float = 0.0
    converged: bool = True
    warm: tuple | None = dataclasses.field(default=None, repr=False)


def _fill_order(spec: g_.DomainSpec, primary: np.ndarray) -> np.ndarray:
    """Cell order: ascending primary score, ties by (z-layer, i, j)."""
    idx = np.indices(spec.cell_shape).reshape(spec.dim, -1)
    keys = tuple(idx[a] for a in reversed(range(spec.dim - 1)))
    keys = keys + (idx[spec.dim - 1], primary.ravel())
    return np.lexsort(keys)


def _check_volume(spec: g_.DomainSpec, target_volume: float) -> float:
    if not 0.0 < target_volume < spec.domain_measure:
        raise InfeasibleVolumeError(
            f"target volume {target_volume} outside (0, {spec.domain_measure})")
    return target_volume / spec.cell_measure


def bathtub_fill(spec: g_.DomainSpec, gain: np.ndarray, target_volume: float,
                 fractional: bool = True) -> np.ndarray:
    """Exact volume-constrained maximizer of a linear gain (no perimeter).

    Fills the highest-gain cells; in fractional mode the last cell takes the
    remaining partial volume, otherwise the cell count is rounded to nearest.
    """
    cells = _check_volume(spec, target_volume)
    order = _fill_order(spec, -gain)
    m = int(np.floor(cells + 1e-12))
    rem = cells - m
    rho = np.zeros(spec.n_cells)
    rho[order[:m]] = 1.0
    if fractional:
        if rem > 1e-12 and m < spec.n_cells:
            rho[order[m]] = rem
    elif rem >= 0.5 and m < spec.n_cells:
        rho[order[m]] = 1.0
    return rho.reshape(spec.cell_shape)


def _bathtub_multiplier(spec: g_.DomainSpec, gain: np.ndarray, cells: float) -> float:
    """Midpoint multiplier separating filled from empty cells."""
    m = int(np.round(cells))
    flat = np.sort(gain.ravel())[::-1]
    if m <= 0:
        return -flat[0]
    if m >= flat.size:
        return -flat[-1]
    return -0.5 * (flat[m - 1] + flat[m])


def binarize(spec: g_.DomainSpec, rho: np.ndarray, target_volume: float) -> np.ndarray:
    """Threshold a density at the level that meets the volume (nearest cell)."""
    g_.validate_density(spec, rho)
    cells = _check_volume(spec, target_volume)
    m = int(np.round(cells))
    order = _fill_order(spec, -rho)
    chi = np.zeros(spec.n_cells)
    chi[order[:m]] = 1.0
    return chi.reshape(spec.cell_shape)


def _shift_clip(y: np.ndarray, cells: float, c0: float | None = None
                ) -> tuple[np.ndarray, float]:
    """Euclidean projection onto the box intersected with the volume slice.

    Returns ``clip(y - c, 0, 1)`` with the shift ``c`` solving
    ``sum clip(y - c, 0, 1) = cells``.  With a warm shift ``c0`` a piecewise
    Newton iteration usually lands in a few passes; otherwise (or on
    breakdown) the exact sorted breakpoint search runs.
    """
    if c0 is not None:
        c = c0
        for _ in range(30):
            x = y - c
            clipped = np.clip(x, 0.0, 1.0)
            phi = clipped.sum() - cells
            if abs(phi) <= 1e-11 * (1.0 + cells):
                return clipped, float(c)
            count = int(np.count_nonzero((x > 0.0) & (x < 1.0)))
            if count == 0:
                break
            c += phi / count
    flat = y.ravel()
    n = flat.size
    ys = np.sort(flat)
    prefix = np.concatenate(([0.0], np.cumsum(ys)))
    bp = np.sort(np.concatenate((ys - 1.0, ys)))
    i1 = np.searchsorted(ys, bp + 1.0, side="left")
    i0 = np.searchsorted(ys, bp, side="right")
    phi = (n - i1) + prefix[i1] - prefix[i0] - bp * (i1 - i0)
    # phi is nonincreasing in the shift; locate the segment holding `cells`.
    j = int(np.searchsorted(-phi, -cells, side="right")) - 1
    j = min(max(j, 0), bp.size - 1)
    if j == bp.size - 1 or phi[j] == cells:
        c = bp[j]
    else:
        drop = phi[j] - phi[j + 1]
        frac = (phi[j] - cells) / drop if drop > 0 else 0.0
        c = bp[j] + frac * (bp[j + 1] - bp[j])
    return np.clip(y - c, 0.0, 1.0), float(c)


def project_to_volume(spec: g_.DomainSpec, rho: np.ndarray, target_volume: float) -> np.ndarray:
    """Shift-and-clip projection of a density onto the volume slice of the box."""
    cells = _check_volume(spec, target_volume)
    out, _ = _shift_clip(rho, cells)
    return out


def _relaxed_value(spec: g_.DomainSpec, gain: np.ndarray, tau: float,
                   rho: np.ndarray) -> float:
    lin = float((gain * rho).sum() * spec.cell_measure)
    return lin - tau * g_.total_variation(spec, rho) if tau > 0.0 else lin


def _support_value(a: np.ndarray, cells: float | None) -> float:
    """Support function of the feasible layout set at score ``a``.

    Over the plain box this is the positive part sum; with a volume slice it
    is the bathtub value: the sum of the ``cells`` largest entries (with a
    fractional last cell).
    """
    flat = a.ravel()
    if cells is None:
        return float(np.maximum(flat, 0.0).sum())
    desc = np.sort(flat)[::-1]
    m = int(np.floor(cells + 1e-12))
    val = float(desc[:m].sum())
    if m < flat.size:
        val += (cells - m) * float(desc[m])
    return val


def _chambolle_pock(spec: g_.DomainSpec, score: np.ndarray, tau: float, tol: float,
                    max_iter: int, rho0: np.ndarray, p0: np.ndarray,
                    cells: float | None = None
                    ) -> tuple[np.ndarray, np.ndarray, int, float, bool, float]:
    """First-order primal-dual splitting for the layout subproblem.

    Solves min over the box of ``tau*sum|K rho| - <score, rho>`` in
    measure-free form; when ``cells`` is given the box is intersected with
    the volume slice (the prox becomes a shift-and-clip projection) and the
    final shift yields the volume multiplier estimate.

    Stops on the certified primal-dual gap: the dual value of a feasible
    (ball-constrained) TV field is a bathtub-type support evaluation, so the
    gap bounds the objective error directly and is immune to the iterate
    rattle that plagues displacement residuals on degenerate faces.
    """
    L2 = g_.forward_diff_norm_bound(spec)
    sigma = step = 0.99 / np.sqrt(L2)
    rho = rho0.copy()
    p = p0.copy()
    rho_bar = rho.copy()
    res = np.inf
    shift = None
    it = 0
    while it < max_iter:
        for _ in range(25):
            rho_prev = rho
            arg = p + sigma * g_.cell_forward_diff(spec, rho_bar)
            norm = np.sqrt(np.sum(arg * arg, axis=-1))
            factor = tau / np.maximum(norm, tau)
            p = arg * factor[..., None]
            y = rho - step * g_.cell_forward_diff_adjoint(spec, p) + step * score
            if cells is None:
                rho = np.clip(y, 0.0, 1.0)
            else:
                rho, shift = _shift_clip(y, cells, c0=shift)
            rho_bar = 2.0 * rho - rho_prev
            it += 1
        diffs = g_.cell_forward_diff(spec, rho)
        primal = tau * float(np.sqrt(np.sum(diffs * diffs, axis=-1)).sum()) \
            - float((score * rho).sum())
        dual = -_support_value(score - g_.cell_forward_diff_adjoint(spec, p), cells)
        res = (primal - dual) / (1.0 + abs(primal) + abs(dual))
        lam = 0.0 if shift is None else -shift / step
        if res <= tol:
            return rho, p, it, float(res), True, lam
    lam = 0.0 if shift is None else -shift / step
    return rho, p, it, float(res), False, lam


def relaxed_layout_at_multiplier(spec: g_.DomainSpec, gain: np.ndarray, tau: float,
                                 lam: float, tol: float = 1e-8,
                                 max_iter: int = 200000) -> np.ndarray:
    """Relaxed layout maximizing ``<gain + lam, rho> - tau*TV`` with free volume.

    Exposes the monotone multiplier-to-volume map of the volume constraint.
    """
    if tau == 0.0:
        return (gain + lam > 0.0).astype(float)
    rho0 = np.full(spec.cell_shape, 0.5)
    p0 = np.zeros(spec.cell_shape + (spec.dim,))
    rho, _, _, _, _, _ = _chambolle_pock(spec, gain + lam, tau, tol, max_iter, rho0, p0)
    return rho


# Full pairwise exchange polish is affordable only on small layouts; larger
# binary recoveries keep the plain volume-matching threshold.
POLISH_MAX_CELLS = 160


def _slab_layouts(spec: g_.DomainSpec, cells: float) -> list[np.ndarray]:
    """Contiguous slabs of the target volume along each axis.

    Slabs are the minimal-perimeter layouts, hence the natural binary
    candidates in the perimeter-dominated regime where the relaxed solution
    flattens out.
    """
    m = int(np.round(cells))
    out = []
    for axis in range(spec.dim):
        n_a = spec.cell_shape[axis]
        per_slice = spec.n_cells // n_a
        if m % per_slice:
            continue
        length = m // per_slice
        for start in range(n_a - length + 1):
            chi = np.zeros(spec.cell_shape)
            sl = [slice(None)] * spec.dim
            sl[axis] = slice(start, start + length)
            chi[tuple(sl)] = 1.0
            out.append(chi)
    return out


def _swap_polish(spec: g_.DomainSpec, gain: np.ndarray, tau: float,
                 chi: np.ndarray) -> np.ndarray:
    """Deterministic steepest-improvement cell exchanges at fixed volume.

    Thresholding a relaxed solution is not always optimal among binary
    layouts (the volume-constrained relaxation can have a strict gap); this
    exchange pass repairs small layouts.  Local optimality only.
    """
    flat = chi.ravel().copy()
    shape = spec.cell_shape

    def value(vec):
        field = vec.reshape(shape)
        return _relaxed_value(spec, gain, tau, field)

    base = value(flat)
    for _ in range(2 * spec.n_cells):
        fluid = np.flatnonzero(flat == 1.0)
        air = np.flatnonzero(flat == 0.0)
        best_delta = 1e-12
        best_pair = None
        for i in fluid:
            for j in air:
                flat[i], flat[j] = 0.0, 1.0
                delta = value(flat) - base
                flat[i], flat[j] = 1.0, 0.0
                if delta > best_delta:
                    best_delta = delta
                    best_pair = (i, j)
        if best_pair is None:
            break
        i, j = best_pair
        flat[i], flat[j] = 0.0, 1.0
        base += best_delta
    return flat.reshape(shape)


def maximize_gain(spec: g_.DomainSpec, gain: np.ndarray, tau: float,
                  target_volume: float, tol: float = 1e-7, max_iter: int = 40000,
                  mode: str = "relaxed", warm: tuple | None = None,
                  strict: bool = True) -> tuple[np.ndarray, OuterReport]:
    """Volume-constrained maximization of ``<gain, rho> - tau*TV(rho)``.

    ``mode`` is ``"relaxed"`` (density in [0, 1]) or ``"binary"`` (thresholded
    indicator, exchange-polished on small grids).  ``warm`` restarts the
    splitting from a previous call's ``report.warm``.  The report carries a
    certified ``dual_bound`` on the true maximum; with ``strict=False`` an
    unconverged solve returns its best field instead of raising, the bound
    staying valid either way.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    cells = _check_volume(spec, target_volume)

    if tau == 0.0:
        rho = bathtub_fill(spec, gain, target_volume, fractional=(mode == "relaxed"))
        lam = _bathtub_multiplier(spec, gain, cells)
        relaxed = bathtub_fill(spec, gain, target_volume, fractional=True)
        relaxed_value = _relaxed_value(spec, gain, tau, relaxed)
        report = OuterReport(
            iterations=0,
            relaxed_value=relaxed_value,
            binary_value=(_relaxed_value(spec, gain, tau, rho) if mode == "binary" else None),
            volume_error=abs(g_.volume(spec, rho) - target_volume),
            pd_residual=0.0,
            multiplier=lam,
            dual_bound=relaxed_value,
            warm=(relaxed, np.zeros(spec.cell_shape + (spec.dim,)), lam),
        )
        return rho, report

    if warm is not None:
        rho_ws, p_ws, _ = warm
        rho0 = project_to_volume(spec, rho_ws, target_volume)
        p0 = p_ws.copy()
    else:
        rho0 = bathtub_fill(spec, gain, target_volume, fractional=True)
        p0 = np.zeros(spec.cell_shape + (spec.dim,))

    rho, p, total_iters, pd_res, ok, lam = _chambolle_pock(
        spec, gain, tau, tol, max_iter, rho0, p0, cells=cells)
    if not ok:
        # A stale warm start can rattle on a degenerate face; retry cold.
        rho, p, extra, pd_res, ok, lam = _chambolle_pock(
            spec, gain, tau, tol, max_iter,
            bathtub_fill(spec, gain, target_volume, fractional=True),
            np.zeros(spec.cell_shape + (spec.dim,)), cells=cells)
        total_iters += extra

    relaxed_value = _relaxed_value(spec, gain, tau, rho)
    dual_bound = spec.cell_measure * _support_value(
        gain - g_.cell_forward_diff_adjoint(spec, p), cells)
    volume_error = abs(g_.volume(spec, rho) - target_volume)
    field = rho
    binary_value = None
    if mode == "binary":
        # Quantize before thresholding: on tie plateaus the relaxed solution
        # is flat up to solver noise, and the deterministic tie-break should
        # decide the fill order, not that noise.
        quantized = np.round(rho / 1e-6) * 1e-6
        candidates = [binarize(spec, quantized, target_volume),
                      binarize(spec, rho, target_volume),
                      bathtub_fill(spec, gain, target_volume, fractional=False)]
        candidates.extend(_slab_layouts(spec, cells))
        if spec.n_cells <= POLISH_MAX_CELLS:
            candidates = [_swap_polish(spec, gain, tau, c) for c in candidates]
        field = candidates[0]
        binary_value = _relaxed_value(spec, gain, tau, field)
        for cand in candidates[1:]:
            val = _relaxed_value(spec, gain, tau, cand)
            if val > binary_value + 1e-15:
                field, binary_value = cand, val
        volume_error = abs(g_.volume(spec, field) - target_volume)
    report = OuterReport(iterations=total_iters, relaxed_value=relaxed_value,
                         binary_value=binary_value, volume_error=volume_error,
                         pd_residual=pd_res, multiplier=lam, dual_bound=dual_bound,
                         converged=ok, warm=(rho, p, lam))
    if not ok and strict:
        raise OuterNonConvergenceError(
            f"primal-dual residual {pd_res:.3e} above {tol:.3e} after {total_iters} iterations",
            field, report)
    return field, report
