"""Box grids and discrete horizontal calculus.

The discrete horizontal derivative along a generator Z_i = sum_j a_ij d_j is

    (Z_i^h u)(x) = sum_j a_ij(x) * (u(x + h_j e_j) - u(x - h_j e_j)) / (2 h_j),

a centered difference per axis with the coefficient evaluated at the center
node.  Values of u outside the grid are taken to be zero (the homogeneous
Dirichlet extension), and the result is pinned to zero on the boundary frame
so that fields and their horizontal derivatives both live in the trace-zero
space.  Under the coefficient restriction enforced by
:class:`~fbp.carnot_group.GroupSpec` (a_ij independent of x_j) each Z_i^h is
then *exactly* skew adjoint for the interior-weighted inner product:

    <Z_i^h u, v> = -<u, Z_i^h v>     for trace-zero u, v.

The sub-Laplacian is assembled in adjoint-pair form,

    L^h u = - sum_i (Z_i^h)^T (Z_i^h u) = sum_i Z_i^h (Z_i^h u),

so the discrete integration-by-parts identity
<L^h u, v> = -<grad_h u, grad_h v> holds to rounding, and the gradient of the
discrete energy is exactly the discrete residual.

One caveat of the wide (composed centered difference) stencil is deliberate
and documented rather than hidden: on grids with an odd node count along
every axis, the field that is 1 on nodes with all-odd indices and 0
elsewhere is annihilated by every centered difference, so -L^h has a
one-dimensional null space.  :func:`null_mode` exposes that field; the
solvers deflate it.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .carnot_group import GroupSpec

__all__ = [
    "BoxDomain",
    "Grid",
    "FieldShapeError",
    "apply_Z",
    "horizontal_gradient",
    "sub_laplacian",
    "integrate",
    "inner_product",
    "null_mode",
    "write_field_csv",
    "read_field_csv",
]


class FieldShapeError(ValueError):
    """Field array does not match the grid it is used with."""


@dataclass(frozen=True)
class BoxDomain:
    """Open axis-aligned box (the bounded domain the problem is posed on)."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"need lower < upper per axis, got [{lo}, {hi}]")

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def widths(self) -> tuple[float, ...]:
        return tuple(hi - lo for lo, hi in zip(self.lower, self.upper))

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def center(self) -> tuple[float, ...]:
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.lower, self.upper))


@dataclass(frozen=True)
class Grid:
    """Tensor grid of nodes on a box, including the boundary faces.

    Nodes on the faces carry the Dirichlet data (zero for all PDE fields);
    quadrature weights vanish there, consistent with trace-zero fields.
    """

    domain: BoxDomain
    shape: tuple[int, ...]

    def __post_init__(self):
        if len(self.shape) != self.domain.dim:
            raise ValueError("grid shape must have one entry per axis")
        if any(n < 3 for n in self.shape):
            raise ValueError(f"need at least 3 nodes per axis, got {self.shape}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (n - 1)
            for lo, hi, n in zip(self.domain.lower, self.domain.upper, self.shape)
        )

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        return tuple(
            np.linspace(lo, hi, n)
            for lo, hi, n in zip(self.domain.lower, self.domain.upper, self.shape)
        )

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    @cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(slice(1, -1) for _ in self.shape)] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = ~self.interior_mask
        mask.setflags(write=False)
        return mask

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def n_nodes(self) -> int:
        return int(np.prod(self.shape))

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check_field(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise FieldShapeError(f"field shape {u.shape} != grid shape {self.shape}")
        return u

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(*coords)`` on the node lattice."""
        return np.asarray(fn(*self.coords), dtype=float)


def _centered_diff(u: np.ndarray, axis: int, h: float) -> np.ndarray:
    """(u(x + h e) - u(x - h e)) / 2h with zero extension outside the grid."""
    pad = [(0, 0)] * u.ndim
    pad[axis] = (1, 1)
    up = np.pad(u, pad)
    lo = [slice(None)] * u.ndim
    hi = [slice(None)] * u.ndim
    lo[axis] = slice(0, u.shape[axis])
    hi[axis] = slice(2, u.shape[axis] + 2)
    return (up[tuple(hi)] - up[tuple(lo)]) / (2.0 * h)


@lru_cache(maxsize=64)
def _coefficient_tables(spec: GroupSpec, grid: Grid):
    """Evaluate a_ij on the node lattice once per (spec, grid).

    Returns, per horizontal index i, a list of (axis j, coefficient) pairs
    where the coefficient is a float for constant polynomials and a full
    node array otherwise.  Zero coefficients are dropped.
    """
    if spec.ambient_dim != grid.dim:
        raise FieldShapeError(
            f"group lives on R^{spec.ambient_dim} but grid has dim {grid.dim}"
        )
    tables = []
    for field in spec.horizontal_fields:
        entries = []
        for j, poly in enumerate(field):
            if poly.is_zero():
                continue
            if poly.is_constant():
                entries.append((j, poly.constant_value()))
            else:
                entries.append((j, poly(grid.coords)))
        tables.append(tuple(entries))
    return tuple(tables)


def apply_Z(spec: GroupSpec, grid: Grid, i: int, u: np.ndarray) -> np.ndarray:
    """Discrete horizontal derivative Z_i^h u (zero on the boundary frame)."""
    u = grid.check_field(u)
    tables = _coefficient_tables(spec, grid)
    if not 0 <= i < spec.n_horizontal:
        raise IndexError(f"horizontal index {i} out of range")
    out = grid.zeros()
    for axis, coeff in tables[i]:
        out += coeff * _centered_diff(u, axis, grid.spacing[axis])
    out[grid.boundary_mask] = 0.0
    return out


def horizontal_gradient(spec: GroupSpec, grid: Grid, u: np.ndarray) -> np.ndarray:
    """Stack of Z_i^h u for i = 1 .. N_1; shape (N_1,) + grid.shape."""
    return np.stack([apply_Z(spec, grid, i, u) for i in range(spec.n_horizontal)])


def sub_laplacian(spec: GroupSpec, grid: Grid, u: np.ndarray) -> np.ndarray:
    """L^h u = sum_i Z_i^h(Z_i^h u), the adjoint-pair sub-Laplacian.

    Exact (up to rounding) on per-axis quadratics at nodes at least two
    layers away from the boundary; the layer next to the boundary sees the
    zero Dirichlet extension.
    """
    u = grid.check_field(u)
    out = grid.zeros()
    for i in range(spec.n_horizontal):
        out += apply_Z(spec, grid, i, apply_Z(spec, grid, i, u))
    return out


def integrate(grid: Grid, f: np.ndarray) -> float:
    """Riemann sum of f over interior nodes times the cell volume.

    Boundary nodes carry weight zero, consistent with trace-zero fields.
    The reduction order is fixed by the node layout, so repeated runs are
    bit-identical.
    """
    f = grid.check_field(f)
    return float(np.sum(f[grid.interior_mask]) * grid.cell_volume)


def inner_product(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    """L^2 pairing <f, g> = integrate(f * g)."""
    f = grid.check_field(f)
    g = grid.check_field(g)
    return float(np.sum(f[grid.interior_mask] * g[grid.interior_mask]) * grid.cell_volume)


def null_mode(grid: Grid) -> np.ndarray | None:
    """Checkerboard field annihilated by every centered difference.

    On grids whose node count is odd along every axis, the indicator of the
    all-odd-index sublattice is trace zero and has identically vanishing
    centered differences at interior nodes, so it spans the kernel of the
    composed sub-Laplacian.  Returns None when the node counts rule the
    mode out (any even axis pins it to zero).
    """
    if any(n % 2 == 0 for n in grid.shape):
        return None
    factors = []
    for n in grid.shape:
        v = np.zeros(n)
        v[1::2] = 1.0
        factors.append(v)
    out = factors[0]
    for v in factors[1:]:
        out = np.multiply.outer(out, v)
    return out


# -- CSV field serialization -------------------------------------------------
#
# One row per node in lexicographic (C) order, header x1,...,xN,value.
# Floats are written with repr so a read-write round trip is exact.


class CsvFormatError(ValueError):
    """Malformed field CSV; message carries row/column diagnostics."""


def write_field_csv(grid: Grid, u: np.ndarray, path) -> None:
    u = grid.check_field(u)
    dim = grid.dim
    header = [f"x{k + 1}" for k in range(dim)] + ["value"]
    flat_coords = [c.ravel(order="C") for c in grid.coords]
    values = u.ravel(order="C")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for idx in range(values.size):
            row = [repr(float(c[idx])) for c in flat_coords]
            row.append(repr(float(values[idx])))
            writer.writerow(row)


def read_field_csv(path) -> tuple[Grid, np.ndarray]:
    """Rebuild (grid, field) from a CSV produced by :func:`write_field_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if len(header) < 2 or header[-1] != "value":
            raise CsvFormatError(f"{path}: bad header {header!r}")
        dim = len(header) - 1
        coords: list[list[float]] = [[] for _ in range(dim)]
        values: list[float] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise CsvFormatError(
                    f"{path}: row {lineno} has {len(row)} columns, expected {dim + 1}"
                )
            try:
                parsed = [float(v) for v in row]
            except ValueError as exc:
                raise CsvFormatError(f"{path}: row {lineno}: {exc}") from None
            for k in range(dim):
                coords[k].append(parsed[k])
            values.append(parsed[dim])

    if not values:
        raise CsvFormatError(f"{path}: no data rows")
    axes = [np.unique(np.array(c)) for c in coords]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(values):
        raise CsvFormatError(
            f"{path}: {len(values)} rows do not fill a {shape} tensor grid"
        )
    domain = BoxDomain(
        lower=tuple(float(a[0]) for a in axes),
        upper=tuple(float(a[-1]) for a in axes),
    )
    grid = Grid(domain=domain, shape=shape)
    u = np.array(values).reshape(shape, order="C")
    # check the node order actually was lexicographic over this grid
    for k in range(dim):
        expected = grid.coords[k].ravel(order="C")
        if not np.array_equal(expected, np.array(coords[k])):
            raise CsvFormatError(f"{path}: column x{k + 1} is not in lexicographic node order")
    return grid, u
