"""Plain-text field formats.

Two formats are provided for node and cell fields alike:

* CSV with header ``i,j[,k],value`` in row-major order (first index slowest).
* An ASCII structured-grid format with a three-line header::

      dims: 64 128
      spacing: 0.015625 0.015625
      origin: 0.0 -1.0

  followed by whitespace-separated values in row-major order.

Values are written with full round-trip precision, so rewriting a file from
the same field is byte-identical.
"""

from __future__ import annotations

import numpy as np

_INDEX_NAMES = ("i", "j", "k")


class FieldFormatError(Exception):
    """A field file is missing, truncated, or malformed."""


def write_field_csv(path, values: np.ndarray) -> None:
    arr = np.asarray(values, dtype=float)
    names = _INDEX_NAMES[: arr.ndim]
    idx = np.indices(arr.shape).reshape(arr.ndim, -1)
    flat = arr.reshape(-1)
    with open(path, "w") as fh:
        fh.write(",".join(names) + ",value\n")
        for r in range(flat.size):
            fh.write(",".join(str(idx[a, r]) for a in range(arr.ndim)))
            fh.write("," + repr(float(flat[r])) + "\n")


def read_field_csv(path) -> np.ndarray:
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            rows = [line.strip() for line in fh if line.strip()]
    except OSError as exc:
        raise FieldFormatError(f"cannot read {path}: {exc}") from exc
    cols = header.split(",")
    ndim = len(cols) - 1
    if cols[-1] != "value" or tuple(cols[:-1]) != _INDEX_NAMES[:ndim] or ndim not in (2, 3):
        raise FieldFormatError(f"bad CSV header {header!r} in {path}")
    try:
        table = np.array([[float(x) for x in row.split(",")] for row in rows])
    except ValueError as exc:
        raise FieldFormatError(f"unparseable row in {path}: {exc}") from exc
    if table.ndim != 2 or table.shape[1] != ndim + 1:
        raise FieldFormatError(f"inconsistent column count in {path}")
    idx = table[:, :ndim].astype(int)
    if np.any(idx < 0) or np.any(table[:, :ndim] != idx):
        raise FieldFormatError(f"non-integer index in {path}")
    shape = tuple(idx.max(axis=0) + 1)
    if table.shape[0] != int(np.prod(shape)):
        raise FieldFormatError(f"row count does not fill the index range in {path}")
    expected = np.indices(shape).reshape(ndim, -1).T
    if np.any(idx != expected):
        raise FieldFormatError(f"rows of {path} are not in row-major order")
    return table[:, -1].reshape(shape)


def write_field_grid(path, values: np.ndarray, spacings, origin) -> None:
    arr = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        fh.write("dims: " + " ".join(str(n) for n in arr.shape) + "\n")
        fh.write("spacing: " + " ".join(repr(float(h)) for h in spacings) + "\n")
        fh.write("origin: " + " ".join(repr(float(o)) for o in origin) + "\n")
        flat = arr.reshape(arr.shape[0], -1)
        for row in flat:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_field_grid(path) -> tuple[np.ndarray, tuple[float, ...], tuple[float, ...]]:
    try:
        with open(path) as fh:
            lines = fh.read().split("\n")
    except OSError as exc:
        raise FieldFormatError(f"cannot read {path}: {exc}") from exc
    try:
        if not lines[0].startswith("dims:"):
            raise ValueError("missing dims header")
        dims = tuple(int(x) for x in lines[0].split(":", 1)[1].split())
        spacing = tuple(float(x) for x in lines[1].split(":", 1)[1].split())
        origin = tuple(float(x) for x in lines[2].split(":", 1)[1].split())
        values = np.array([float(x) for line in lines[3:] for x in line.split()])
    except (ValueError, IndexError) as exc:
        raise FieldFormatError(f"malformed grid file {path}: {exc}") from exc
    if values.size != int(np.prod(dims)):
        raise FieldFormatError(f"value count does not match dims in {path}")
    return values.reshape(dims), spacing, origin
