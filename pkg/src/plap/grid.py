"""Tensor-product grids on stretched cylinders and their cross-sections.

Nodes are stored as an ``n``-dimensional array (C order, axis 0 first). The
first ``dim_axial`` axes span the stretched factor ``(-ell, ell)^m``; the
remaining axes span the box cross-section.

Discrete calculus is the multilinear (Q1) element:

* the cell gradient is the forward difference along each axis averaged over
  the cell's other axes (exact for affine fields);
* energies use the element gradient at the 2^n tensor Gauss points; the
  one-point (cell-center) rule alone admits checkerboard modes;
* nodal integrals use the corner-averaged rule, i.e. tensor trapezoid
  weights.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError, MixedRequiresOneAxial, NonPositiveLength

MIN_RESOLUTION = 4


class BC(str, enum.Enum):
    DIRICHLET = "dirichlet"
    MIXED = "mixed"

    @classmethod
    def parse(cls, value) -> "BC":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown boundary condition {value!r}") from None


@dataclass(frozen=True)
class GridSpec:
    """Geometry and resolution of ``Omega_ell = (-ell, ell)^m x omega_2``."""

    dim_axial: int
    half_length: float
    section_extents: tuple[tuple[float, float], ...]
    resolution: int
    bc: BC = BC.DIRICHLET

    def __post_init__(self):
        object.__setattr__(self, "bc", BC.parse(self.bc))
        object.__setattr__(
            self,
            "section_extents",
            tuple((float(lo), float(hi)) for lo, hi in self.section_extents),
        )
        if not self.half_length > 0:
            raise NonPositiveLength(f"half_length must be > 0, got {self.half_length}")
        if self.dim_axial < 1:
            raise ConfigError("dim_axial must be >= 1")
        if self.bc is BC.MIXED and self.dim_axial != 1:
            raise MixedRequiresOneAxial("mixed boundary conditions need dim_axial == 1")
        _check_extents(self.section_extents)
        _check_resolution(self.resolution)

    def with_length(self, half_length: float) -> "GridSpec":
        return GridSpec(self.dim_axial, half_length, self.section_extents, self.resolution, self.bc)


def _check_extents(extents):
    if len(extents) == 0:
        raise ConfigError("cross-section needs at least one axis")
    for lo, hi in extents:
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise ConfigError(f"invalid extent ({lo}, {hi})")


def _check_resolution(resolution):
    if int(resolution) != resolution or resolution < MIN_RESOLUTION:
        raise ConfigError(f"resolution must be an integer >= {MIN_RESOLUTION}, got {resolution}")


def cells_for(length: float, resolution: int) -> int:
    """Fewest uniform cells on an interval so that the spacing is <= 1/resolution."""
    return max(1, math.ceil(length * resolution - 1e-9))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid with a Dirichlet node mask.

    ``dim_axial`` is 0 for a cross-section grid.
    """

    axes: tuple[np.ndarray, ...]
    dirichlet_mask: np.ndarray
    dim_axial: int = 0
    bc: BC = BC.DIRICHLET

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        for a in axes:
            if a.ndim != 1 or a.size < 2:
                raise ConfigError("each axis needs at least two nodes")
            a.setflags(write=False)
        mask = np.asarray(self.dirichlet_mask, dtype=bool)
        if mask.shape != tuple(a.size for a in axes):
            raise ConfigError("mask shape does not match axes")
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "dirichlet_mask", mask)

    # -- geometry ---------------------------------------------------------
    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def cell_shape(self) -> tuple[int, ...]:
        return tuple(a.size - 1 for a in self.axes)

    @cached_property
    def spacing(self) -> tuple[float, ...]:
        return tuple(float((a[-1] - a[0]) / (a.size - 1)) for a in self.axes)

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod([a[-1] - a[0] for a in self.axes]))

    @property
    def free(self) -> np.ndarray:
        return ~self.dirichlet_mask

    @cached_property
    def weights(self) -> np.ndarray:
        """Nodal quadrature weights of the corner-averaged rule."""
        w = np.ones(())
        for a, h in zip(self.axes, self.spacing):
            w1 = np.full(a.size, h)
            w1[0] = w1[-1] = 0.5 * h
            w = np.multiply.outer(w, w1)
        w.setflags(write=False)
        return w

    @cached_property
    def cell_centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``cell_shape + (ndim,)``."""
        mids = [0.5 * (a[:-1] + a[1:]) for a in self.axes]
        c = np.stack(np.meshgrid(*mids, indexing="ij"), axis=-1)
        c.setflags(write=False)
        return c

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (ndim,)``."""
        c = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)
        c.setflags(write=False)
        return c

    def coordinate(self, axis: int) -> np.ndarray:
        """Broadcastable coordinate array of one axis."""
        shape = [1] * self.ndim
        shape[axis] = -1
        return self.axes[axis].reshape(shape)

    @property
    def section_axes(self) -> tuple[np.ndarray, ...]:
        return self.axes[self.dim_axial:]

    def zeros(self) -> "Field":
        return Field(np.zeros(self.shape), self)

    def field(self, values) -> "Field":
        """Wrap values as a Field, zeroing masked nodes."""
        v = np.array(np.broadcast_to(values, self.shape), dtype=float)
        v[self.dirichlet_mask] = 0.0
        return Field(v, self)


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal scalar function on a grid; zero on masked nodes."""

    values: np.ndarray
    grid: Grid = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        if np.any(v[self.grid.dirichlet_mask] != 0.0):
            raise ValueError("field is nonzero on masked nodes")
        object.__setattr__(self, "values", v)

    def __mul__(self, c: float) -> "Field":
        return Field(self.values * c, self.grid)

    __rmul__ = __mul__


# -- construction -----------------------------------------------------------

def _boundary_mask(shape: Sequence[int], axes: Sequence[int]) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for ax in axes:
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        mask[tuple(idx)] = True
        idx[ax] = -1
        mask[tuple(idx)] = True
    return mask


def box_grid(
    extents: Sequence[tuple[float, float]],
    resolution: int,
    masked_axes: Sequence[int] | None = None,
    dim_axial: int = 0,
    bc: BC = BC.DIRICHLET,
) -> Grid:
    """Uniform grid on a box; boundary faces normal to ``masked_axes`` are pinned.

    ``masked_axes=None`` pins the whole boundary.
    """
    _check_extents(extents)
    axes = tuple(
        np.linspace(lo, hi, cells_for(hi - lo, resolution) + 1) for lo, hi in extents
    )
    shape = tuple(a.size for a in axes)
    if masked_axes is None:
        masked_axes = range(len(extents))
    return Grid(axes, _boundary_mask(shape, masked_axes), dim_axial=dim_axial, bc=bc)


def build_grid(spec: GridSpec) -> Grid:
    """Discretize ``Omega_ell`` according to ``spec``."""
    m = spec.dim_axial
    ell = spec.half_length
    extents = [(-ell, ell)] * m + list(spec.section_extents)
    if spec.bc is BC.DIRICHLET:
        masked = range(len(extents))
    else:
        masked = range(m, len(extents))
    return box_grid(extents, spec.resolution, masked, dim_axial=m, bc=spec.bc)


def build_section_grid(extents: Sequence[tuple[float, float]], resolution: int) -> Grid:
    """Dirichlet grid on the cross-section box alone."""
    _check_resolution(resolution)
    return box_grid(list(extents), resolution)


# -- discrete calculus --------------------------------------------------------

def _take(a: np.ndarray, axis: int, sl: slice) -> np.ndarray:
    idx = [slice(None)] * a.ndim
    idx[axis] = sl
    return a[tuple(idx)]


def _interp(a: np.ndarray, axis: int, t: float) -> np.ndarray:
    return (1.0 - t) * _take(a, axis, slice(None, -1)) + t * _take(a, axis, slice(1, None))


def _interp_T(a: np.ndarray, axis: int, t: float) -> np.ndarray:
    shape = list(a.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    _take(out, axis, slice(None, -1))[...] += (1.0 - t) * a
    _take(out, axis, slice(1, None))[...] += t * a
    return out


def _average(a: np.ndarray, axis: int) -> np.ndarray:
    return _interp(a, axis, 0.5)


def _average_T(a: np.ndarray, axis: int) -> np.ndarray:
    return _interp_T(a, axis, 0.5)


def _difference(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    return (_take(a, axis, slice(1, None)) - _take(a, axis, slice(None, -1))) / h


def _difference_T(a: np.ndarray, axis: int, h: float) -> np.ndarray:
    shape = list(a.shape)
    shape[axis] += 1
    out = np.zeros(shape)
    _take(out, axis, slice(None, -1))[...] -= a / h
    _take(out, axis, slice(1, None))[...] += a / h
    return out


CENTER = 0.5
GAUSS_1D = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def gauss_offsets(ndim: int) -> list[tuple[float, ...]]:
    """Reference offsets of the 2^n-point tensor Gauss rule inside a cell."""
    return list(itertools.product(GAUSS_1D, repeat=ndim))


def gradient_at(values: np.ndarray, grid: Grid, offsets: Sequence[float]) -> np.ndarray:
    """Multilinear-element gradient at the same reference point of every cell.

    ``offsets[e]`` in [0, 1] locates the point along axis ``e``. The result
    has shape ``cell_shape + (ndim,)``.
    """
    comps = []
    for d, h in enumerate(grid.spacing):
        g = _difference(values, d, h)
        for e in range(grid.ndim):
            if e != d:
                g = _interp(g, e, offsets[e])
        comps.append(g)
    return np.stack(comps, axis=-1)


def gradient_at_adjoint(cell_vectors: np.ndarray, grid: Grid, offsets: Sequence[float]) -> np.ndarray:
    """Transpose of :func:`gradient_at`."""
    out = np.zeros(grid.shape)
    for d, h in enumerate(grid.spacing):
        g = cell_vectors[..., d]
        for e in reversed(range(grid.ndim)):
            if e != d:
                g = _interp_T(g, e, offsets[e])
        out += _difference_T(g, d, h)
    return out


def gradient_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Cell-center gradients: forward differences averaged over the other axes."""
    return gradient_at(values, grid, (CENTER,) * grid.ndim)


def gradient_adjoint(cell_vectors: np.ndarray, grid: Grid) -> np.ndarray:
    """Transpose of :func:`gradient_array`."""
    return gradient_at_adjoint(cell_vectors, grid, (CENTER,) * grid.ndim)


def points_at(grid: Grid, offsets: Sequence[float]) -> np.ndarray:
    """Coordinates of one reference point in every cell."""
    pts = [a[:-1] + t * np.diff(a) for a, t in zip(grid.axes, offsets)]
    return np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1)


def cell_average(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Mean of the corner values of every cell."""
    a = values
    for e in range(grid.ndim):
        a = _average(a, e)
    return a


def cell_to_node(cell_values: np.ndarray, grid: Grid) -> np.ndarray:
    """Average of the adjacent cell values at every node."""
    total = cell_values
    count = np.ones(grid.cell_shape)
    for e in range(grid.ndim):
        total = _average_T(total, e)
        count = _average_T(count, e)
    return total / count


def cell_gradient(u: Field) -> np.ndarray:
    return gradient_array(u.values, u.grid)


def integrate_nodal(f: Field, power: float) -> float:
    """Corner-averaged quadrature of ``|f|^power`` over the grid's box."""
    if power < 1:
        raise ValueError("power must be >= 1")
    return float(np.sum(f.grid.weights * np.abs(f.values) ** power))
