"""Uniform Cartesian discretization of the container D = Omega x (-1, 1).

Conventions used throughout the package:

* ``dim`` is 2 or 3.  The last coordinate axis is always the vertical ``z``
  spanning (-1, 1); the first ``dim - 1`` axes span the horizontal box
  ``Omega`` with per-axis extents ``extents``.
* Potentials live on grid nodes, shape ``(n_0+1, ..., n_z+1)``; they are
  pinned to zero on the lateral boundary (nodes over the boundary of Omega).
* Densities / indicators live on cells, shape ``(n_0, ..., n_z)``, with
  values in [0, 1].
* Interface height fields live on the horizontal cells of Omega, shape
  ``(n_0, ...)``, values in (-1, 1).

The per-cell gradient is the gradient of the multilinear interpolant of the
cell's corner nodes evaluated at the cell center; it is exact for affine
fields.  The discrete total variation is the cell-summed Euclidean norm of
one-sided (forward) differences, with differences across the outer boundary
of D contributing nothing.
"""

from __future__ import annotations

import dataclasses
import itertools

import numpy as np
import scipy.sparse as sp


class NotAGraphError(Exception):
    """A column of the indicator is not of the form 'fluid below a cut'."""

    def __init__(self, column, reason: str = "non-monotone column"):
        self.column = tuple(int(c) for c in np.atleast_1d(column))
        self.reason = reason
        super().__init__(f"{reason} at column {self.column}")


@dataclasses.dataclass(frozen=True)
class DomainSpec:
    """Geometry and resolution of the discretized container."""

    dim: int
    extents: tuple[float, ...]
    n_horizontal: tuple[int, ...]
    n_z: int

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        object.__setattr__(self, "extents", tuple(float(e) for e in np.atleast_1d(self.extents)))
        object.__setattr__(
            self, "n_horizontal", tuple(int(n) for n in np.atleast_1d(self.n_horizontal))
        )
        if len(self.extents) != self.dim - 1 or len(self.n_horizontal) != self.dim - 1:
            raise ValueError("need one extent and one resolution per horizontal axis")
        if any(e <= 0 for e in self.extents):
            raise ValueError("extents must be positive")
        if any(n < 2 for n in self.n_horizontal) or self.n_z < 2:
            raise ValueError("all resolutions must be >= 2")

    # --- derived geometry -------------------------------------------------
    @property
    def spacings(self) -> tuple[float, ...]:
        hs = tuple(e / n for e, n in zip(self.extents, self.n_horizontal))
        return hs + (2.0 / self.n_z,)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return self.n_horizontal + (self.n_z,)

    @property
    def node_shape(self) -> tuple[int, ...]:
        return tuple(n + 1 for n in self.cell_shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cell_shape))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def omega_measure(self) -> float:
        return float(np.prod(self.extents))

    @property
    def domain_measure(self) -> float:
        return 2.0 * self.omega_measure

    def node_axes(self) -> tuple[np.ndarray, ...]:
        """One coordinate array per axis, at grid nodes."""
        axes = [np.linspace(0.0, e, n + 1) for e, n in zip(self.extents, self.n_horizontal)]
        axes.append(np.linspace(-1.0, 1.0, self.n_z + 1))
        return tuple(axes)

    def cell_axes(self) -> tuple[np.ndarray, ...]:
        """One coordinate array per axis, at cell centers."""
        return tuple(0.5 * (a[:-1] + a[1:]) for a in self.node_axes())

    def cell_z(self) -> np.ndarray:
        """Cell-shaped array of cell-center z coordinates."""
        zc = self.cell_axes()[-1]
        shape = (1,) * (self.dim - 1) + (self.n_z,)
        return np.broadcast_to(zc.reshape(shape), self.cell_shape).copy()


# --- field construction and validation -------------------------------------

def zero_potential(spec: DomainSpec) -> np.ndarray:
    return np.zeros(spec.node_shape)


def lateral_node_mask(spec: DomainSpec) -> np.ndarray:
    """True at nodes on the lateral boundary (where potentials are pinned)."""
    mask = np.zeros(spec.node_shape, dtype=bool)
    for axis in range(spec.dim - 1):
        idx = [slice(None)] * spec.dim
        idx[axis] = 0
        mask[tuple(idx)] = True
        idx[axis] = -1
        mask[tuple(idx)] = True
    return mask


def validate_potential(spec: DomainSpec, u: np.ndarray) -> None:
    if u.shape != spec.node_shape:
        raise ValueError(f"potential shape {u.shape} != node shape {spec.node_shape}")
    if np.any(u[lateral_node_mask(spec)] != 0.0):
        raise ValueError("potential must vanish exactly on the lateral boundary")


def validate_density(spec: DomainSpec, rho: np.ndarray) -> None:
    if rho.shape != spec.cell_shape:
        raise ValueError(f"density shape {rho.shape} != cell shape {spec.cell_shape}")
    if rho.min() < -1e-12 or rho.max() > 1.0 + 1e-12:
        raise ValueError("density values must lie in [0, 1]")


def is_binary(rho: np.ndarray) -> bool:
    return bool(np.all((rho == 0.0) | (rho == 1.0)))


def validate_height(spec: DomainSpec, eta: np.ndarray) -> None:
    if eta.shape != spec.cell_shape[:-1]:
        raise ValueError(f"height shape {eta.shape} != horizontal shape {spec.cell_shape[:-1]}")
    if np.any(np.abs(eta) >= 1.0):
        raise ValueError("interface height must satisfy |eta| < 1")


# --- per-cell gradient of the multilinear interpolant ----------------------

def _corner_slices(corner: tuple[int, ...]) -> tuple[slice, ...]:
    return tuple(slice(1, None) if b else slice(0, -1) for b in corner)


def cell_gradient(spec: DomainSpec, u: np.ndarray) -> np.ndarray:
    """Gradient at cell centers, shape ``cell_shape + (dim,)``."""
    if u.shape != spec.node_shape:
        raise ValueError(f"potential shape {u.shape} != node shape {spec.node_shape}")
    d = spec.dim
    h = spec.spacings
    scale = 1.0 / (1 << (d - 1))
    g = np.zeros(spec.cell_shape + (d,))
    for corner in itertools.product((0, 1), repeat=d):
        view = u[_corner_slices(corner)]
        for axis in range(d):
            sign = 1.0 if corner[axis] else -1.0
            g[..., axis] += sign * scale / h[axis] * view
    return g


def cell_gradient_adjoint(spec: DomainSpec, q: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`cell_gradient`: scatters cell vectors back to nodes."""
    d = spec.dim
    h = spec.spacings
    scale = 1.0 / (1 << (d - 1))
    out = np.zeros(spec.node_shape)
    for corner in itertools.product((0, 1), repeat=d):
        view = out[_corner_slices(corner)]
        for axis in range(d):
            sign = 1.0 if corner[axis] else -1.0
            view += sign * scale / h[axis] * q[..., axis]
    return out


def gradient_matrix(spec: DomainSpec) -> sp.csr_matrix:
    """Sparse matrix form of :func:`cell_gradient`.

    Rows are cell-major with the ``dim`` components interleaved
    (row = cell*dim + axis), columns are raveled node indices.
    """
    d = spec.dim
    h = spec.spacings
    scale = 1.0 / (1 << (d - 1))
    n_cells = spec.n_cells
    cell_index = np.indices(spec.cell_shape).reshape(d, -1)
    rows, cols, data = [], [], []
    for corner in itertools.product((0, 1), repeat=d):
        node_multi = cell_index + np.array(corner).reshape(d, 1)
        node_flat = np.ravel_multi_index(node_multi, spec.node_shape)
        for axis in range(d):
            sign = 1.0 if corner[axis] else -1.0
            rows.append(np.arange(n_cells) * d + axis)
            cols.append(node_flat)
            data.append(np.full(n_cells, sign * scale / h[axis]))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_cells * d, int(np.prod(spec.node_shape))),
    )
    return mat.tocsr()


# --- total variation --------------------------------------------------------

def cell_forward_diff(spec: DomainSpec, rho: np.ndarray) -> np.ndarray:
    """One-sided differences of a cell field, shape ``cell_shape + (dim,)``.

    The difference across the outer boundary of D is zero, so constant
    fields have no variation and wall contact is perimeter-free.
    """
    d = spec.dim
    h = spec.spacings
    out = np.zeros(spec.cell_shape + (d,))
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        out[tuple(lo) + (axis,)] = (rho[tuple(hi)] - rho[tuple(lo)]) / h[axis]
    return out


def cell_forward_diff_adjoint(spec: DomainSpec, q: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`cell_forward_diff` (a negative discrete divergence)."""
    d = spec.dim
    h = spec.spacings
    out = np.zeros(spec.cell_shape)
    for axis in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        comp = q[..., axis]
        out[tuple(lo)] -= comp[tuple(lo)] / h[axis]
        out[tuple(hi)] += comp[tuple(lo)] / h[axis]
    return out


def forward_diff_norm_bound(spec: DomainSpec) -> float:
    """Upper bound on the operator norm squared of :func:`cell_forward_diff`."""
    return float(sum(4.0 / h ** 2 for h in spec.spacings))


def total_variation(spec: DomainSpec, rho: np.ndarray) -> float:
    """Isotropic discrete total variation measured inside the open container."""
    diffs = cell_forward_diff(spec, rho)
    return float(np.sqrt(np.sum(diffs * diffs, axis=-1)).sum() * spec.cell_measure)


def volume(spec: DomainSpec, rho: np.ndarray) -> float:
    return float(rho.sum() * spec.cell_measure)


# --- graph <-> indicator correspondence ------------------------------------

def indicator_from_graph(spec: DomainSpec, eta: np.ndarray) -> np.ndarray:
    """Binary cell field that is 1 where the cell center lies below eta."""
    eta = np.asarray(eta, dtype=float)
    validate_height(spec, eta)
    zc = spec.cell_axes()[-1]
    return (zc < eta[..., None]).astype(float)


def graph_from_indicator(spec: DomainSpec, chi: np.ndarray) -> np.ndarray:
    """Recover the interface height of a monotone-column indicator.

    Each column must consist of fluid cells below a single cut and air above
    it; otherwise :class:`NotAGraphError` identifies the first offending
    column (overhangs, bubbles, floating cells).  The returned height is the
    z coordinate of the cut face, which may touch the container top/bottom.
    """
    if chi.shape != spec.cell_shape:
        raise ValueError(f"indicator shape {chi.shape} != cell shape {spec.cell_shape}")
    if not is_binary(chi):
        raise NotAGraphError(
            np.unravel_index(int(np.argmax((chi != 0.0) & (chi != 1.0))), spec.cell_shape)[:-1],
            reason="non-binary value",
        )
    fluid = chi.astype(bool)
    counts = fluid.sum(axis=-1)
    expected = np.arange(spec.n_z) < counts[..., None]
    bad = np.any(fluid != expected, axis=-1)
    if np.any(bad):
        column = np.argwhere(bad)[0]
        raise NotAGraphError(column)
    hz = spec.spacings[-1]
    return -1.0 + counts.astype(float) * hz
