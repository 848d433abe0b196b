"""Uniform tensor grids, finite differences, quadrature and path integrals."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.integrate import trapezoid

CSV_SCHEMA = "transmute-gridfunction/1"


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    intervals: tuple[tuple[float, float], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.intervals) != len(self.counts):
            raise GridError("dim mismatch between intervals and counts")
        if len(self.counts) not in (1, 2):
            raise GridError(f"dim must be 1 or 2, got {len(self.counts)}")
        for (a, b), n in zip(self.intervals, self.counts):
            if not a < b:
                raise GridError(f"degenerate interval [{a}, {b}]")
            if n < 3:
                raise GridError(f"count {n} < 3")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple((b - a) / (n - 1) for (a, b), n in zip(self.intervals, self.counts))

    def axis(self, j: int) -> np.ndarray:
        a, _ = self.intervals[j]
        return a + np.arange(self.counts[j]) * self.spacings[j]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Node coordinates broadcast to the grid shape ('ij' indexing)."""
        return tuple(np.meshgrid(*[self.axis(j) for j in range(self.dim)], indexing="ij"))

    def contains(self, node: tuple[int, ...]) -> bool:
        return len(node) == self.dim and all(0 <= i < n for i, n in zip(node, self.counts))


def make_grid(intervals, counts) -> GridSpec:
    intervals = tuple((float(a), float(b)) for a, b in intervals)
    return GridSpec(intervals, tuple(int(n) for n in counts))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Channel-valued samples on a grid, stored with shape grid.shape + (N,)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == self.grid.dim:
            v = v[..., None]
        if v.shape[:-1] != self.grid.shape or v.shape[-1] < 1:
            raise GridError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("non-finite grid function values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def __add__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other: GridFunction) -> GridFunction:
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c) -> GridFunction:
        return GridFunction(self.grid, self.values * c)

    __rmul__ = __mul__


def sample(grid: GridSpec, fn, channels: int = 1) -> GridFunction:
    """Evaluate fn(*coords) on the grid; scalar output is broadcast to N channels."""
    v = np.asarray(fn(*grid.coords()), dtype=complex)
    if v.shape == grid.shape:
        v = np.repeat(v[..., None], channels, axis=-1)
    return GridFunction(grid, v)


def fd_weights(offsets, order: int) -> np.ndarray:
    """Finite-difference weights on integer offsets (Vandermonde solve)."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    V = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = np.prod(np.arange(1, order + 1))
    return np.linalg.solve(V, rhs)


@lru_cache(maxsize=128)
def diff_matrix(n: int, h: float, order: int, accuracy: int = 2) -> sp.csr_matrix:
    """Sparse n x n derivative matrix: central inside, one-sided near the ends."""
    if order not in (1, 2, 3):
        raise GridError(f"unsupported derivative order {order}")
    if accuracy not in (2, 4):
        raise GridError(f"unsupported accuracy {accuracy}")
    width = order + accuracy
    if n < width:
        raise GridError(f"need at least {width} points for order {order}, got {n}")
    p = (order + accuracy - 1) // 2
    rows, cols, vals = [], [], []
    central = fd_weights(np.arange(-p, p + 1), order)
    for i in range(n):
        if i < p:
            idx = np.arange(width)
        elif i >= n - p:
            idx = np.arange(n - width, n)
        else:
            idx = np.arange(i - p, i + p + 1)
            rows += [i] * len(idx); cols += list(idx); vals += list(central)
            continue
        w = fd_weights(idx - i, order)
        rows += [i] * len(idx); cols += list(idx); vals += list(w)
    D = sp.csr_matrix((np.array(vals) / h**order, (rows, cols)), shape=(n, n))
    return D


def _diff_array(v: np.ndarray, grid: GridSpec, axis: int, order: int, accuracy: int = 2) -> np.ndarray:
    if not 0 <= axis < grid.dim:
        raise GridError(f"axis {axis} out of range for dim {grid.dim}")
    D = diff_matrix(grid.counts[axis], grid.spacings[axis], order, accuracy)
    w = np.moveaxis(v, axis, 0)
    shp = w.shape
    out = (D @ w.reshape(shp[0], -1)).reshape(shp)
    return np.moveaxis(out, 0, axis)


def differentiate(f: GridFunction, axis: int, order: int, accuracy: int = 2) -> GridFunction:
    return GridFunction(f.grid, _diff_array(f.values, f.grid, axis, order, accuracy))


def partial(v: np.ndarray, grid: GridSpec, alpha: tuple[int, ...], accuracy: int = 2) -> np.ndarray:
    """Mixed derivative of a raw array (grid axes leading), ascending axis order."""
    out = v
    for axis, k in enumerate(alpha):
        if k:
            out = _diff_array(out, grid, axis, k, accuracy)
    return out


def trapezoid_weights(grid: GridSpec) -> np.ndarray:
    w = 1.0
    for j in range(grid.dim):
        wj = np.full(grid.counts[j], grid.spacings[j])
        wj[0] = wj[-1] = grid.spacings[j] / 2
        w = np.multiply.outer(w, wj)
    return np.asarray(w)


def integrate_cells(f: GridFunction | np.ndarray, grid: GridSpec | None = None) -> complex:
    """Trapezoid rule over the box, summed over channels."""
    if isinstance(f, GridFunction):
        grid, v = f.grid, f.values.sum(axis=-1)
    else:
        v = np.asarray(f)
        if v.ndim > grid.dim:  # trailing channel axes
            v = v.reshape(grid.shape + (-1,)).sum(axis=-1)
    for j in reversed(range(grid.dim)):
        v = trapezoid(v, dx=grid.spacings[j], axis=j)
    return complex(v)


@dataclass(frozen=True, eq=False)
class FormField:
    """Differential form with one scalar field per basis k-form (lexicographic)."""

    grid: GridSpec
    degree: int
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not 0 <= self.degree <= self.grid.dim:
            raise GridError(f"degree {self.degree} invalid for dim {self.grid.dim}")
        comps = tuple(np.asarray(c, dtype=complex) for c in self.components)
        if len(comps) != comb(self.grid.dim, self.degree):
            raise GridError("wrong number of form components")
        for c in comps:
            if c.shape != self.grid.shape or not np.all(np.isfinite(c)):
                raise GridError("form component has bad shape or non-finite entries")
        object.__setattr__(self, "components", comps)


@dataclass(frozen=True)
class PolylinePath:
    vertices: tuple[tuple[int, ...], ...]
    orientation: int = 1

    def __post_init__(self):
        if self.orientation not in (1, -1):
            raise GridError("orientation must be +1 or -1")
        if len(self.vertices) < 1:
            raise GridError("empty path")
        for p, q in zip(self.vertices, self.vertices[1:]):
            moved = [j for j, (a, b) in enumerate(zip(p, q)) if a != b]
            if len(moved) > 1:
                raise GridError(f"segment {p} -> {q} is not grid-aligned")

    def reversed(self) -> PolylinePath:
        return PolylinePath(self.vertices, -self.orientation)


def staircase(start, end, axes_order=(0, 1)) -> PolylinePath:
    """Axis-aligned path from start to end, moving along axes in the given order."""
    pts = [tuple(start)]
    cur = list(start)
    for ax in axes_order:
        if cur[ax] != end[ax]:
            cur[ax] = end[ax]
            pts.append(tuple(cur))
    return PolylinePath(tuple(pts))


def _segment_integral(comp: np.ndarray, p, q, axis: int, h: float) -> complex:
    lo, hi = sorted((p[axis], q[axis]))
    idx = list(p)
    idx[axis] = slice(lo, hi + 1)
    vals = comp[tuple(idx)]
    s = trapezoid(vals, dx=h) if len(vals) > 1 else 0.0
    return s if q[axis] > p[axis] else -s


def integrate_path(form: FormField, path: PolylinePath) -> complex:
    if form.degree != 1:
        raise GridError("path integration needs a 1-form")
    if form.grid.dim != 2:
        raise GridError("path integration is defined for dim 2")
    for v in path.vertices:
        if not form.grid.contains(v):
            raise GridError(f"vertex {v} outside grid")
    total = 0.0
    for p, q in zip(path.vertices, path.vertices[1:]):
        for axis in range(2):
            if p[axis] != q[axis]:
                total += _segment_integral(form.components[axis], p, q, axis, form.grid.spacings[axis])
    return complex(path.orientation * total)


def write_csv(f: GridFunction, path, schema: str = CSV_SCHEMA) -> None:
    grid = f.grid
    cols = [g.ravel() for g in grid.coords()]
    vals = f.values.reshape(grid.size, f.channels)
    header = [f"x{j + 1}" for j in range(grid.dim)]
    for c in range(f.channels):
        header += [f"re_c{c}", f"im_c{c}"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        fh.write("# grid: " + ";".join(f"{a!r},{b!r},{n}" for (a, b), n in zip(grid.intervals, grid.counts)) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(grid.size):
            row = [repr(float(c[i])) for c in cols]
            for c in range(f.channels):
                row += [repr(float(vals[i, c].real)), repr(float(vals[i, c].imag))]
            w.writerow(row)


def read_csv(path) -> GridFunction:
    text = Path(path).read_text().splitlines()
    meta = {}
    body = []
    for line in text:
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        else:
            body.append(line)
    if "grid" not in meta:
        raise GridError(f"{path}: missing grid header")
    parts = [p.split(",") for p in meta["grid"].split(";")]
    grid = make_grid([(float(a), float(b)) for a, b, _ in parts], [int(n) for *_, n in parts])
    rows = list(csv.reader(body))
    data = np.array(rows[1:], dtype=float)
    re, im = data[:, grid.dim::2], data[:, grid.dim + 1::2]
    return GridFunction(grid, (re + 1j * im).reshape(grid.shape + (re.shape[1],)))


def write_matrix_csv(values: np.ndarray, path, schema: str, index_names=("i", "j")) -> None:
    """Dense 2-index array as rows (i, j, re, im); extra trailing channel axes are flattened."""
    v = np.asarray(values)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: {schema}\n")
        w = csv.writer(fh)
        extra = v.shape[2:]
        if extra:
            chans = list(np.ndindex(*extra))
            header = list(index_names)
            for ch in chans:
                tag = "".join(map(str, ch))
                header += [f"re_{tag}", f"im_{tag}"]
            w.writerow(header)
        else:
            w.writerow(list(index_names) + ["re", "im"])
        for i in range(v.shape[0]):
            for j in range(v.shape[1]):
                cell = np.ravel(v[i, j])
                row = [i, j]
                for z in cell:
                    row += [repr(float(np.real(z))), repr(float(np.imag(z)))]
                w.writerow(row)
