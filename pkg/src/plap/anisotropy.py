"""Block coefficient fields ``A = [[A11, A12], [A12^T, A22]]``.

Blocks are vectorized callables. ``a11`` receives full points ``x`` with shape
``(..., n)``; ``a12`` and ``a22`` receive cross-section points ``X2`` with
shape ``(..., n - m)``. Only a closed set of families is available, so every
coefficient can be written down in a config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import ConfigError, EllipticityViolation, ZeroA11
from .grid import Grid

BlockFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CoeffSpec:
    dim: int
    dim_axial: int
    a11: BlockFn
    a12: BlockFn
    a22: BlockFn
    lambda_min: float
    M: float
    family: Mapping[str, Any] = field(default_factory=dict)
    a11_depends_on_axial: bool = False

    def __post_init__(self):
        if not 0 <= self.dim_axial < self.dim:
            raise ConfigError(f"need 0 <= m < n, got m={self.dim_axial}, n={self.dim}")
        if not (self.lambda_min > 0 and self.M >= self.lambda_min):
            raise ConfigError("declared bounds need 0 < lambda_min <= M")

    @property
    def dim_section(self) -> int:
        return self.dim - self.dim_axial

    def matrix_field(self, points: np.ndarray) -> np.ndarray:
        """Assembled ``A`` at an array of points, shape ``(..., n, n)``."""
        x = np.asarray(points, dtype=float)
        m, n = self.dim_axial, self.dim
        X2 = x[..., m:]
        batch = x.shape[:-1]
        out = np.empty(batch + (n, n))
        if m:
            a12 = np.broadcast_to(self.a12(X2), batch + (m, n - m))
            out[..., :m, :m] = np.broadcast_to(self.a11(x), batch + (m, m))
            out[..., :m, m:] = a12
            out[..., m:, :m] = np.swapaxes(a12, -1, -2)
        out[..., m:, m:] = np.broadcast_to(self.a22(X2), batch + (n - m, n - m))
        return out

    def section_points(self, X2: np.ndarray) -> np.ndarray:
        """Embed cross-section points as full points with zero axial part."""
        X2 = np.asarray(X2, dtype=float)
        return np.concatenate([np.zeros(X2.shape[:-1] + (self.dim_axial,)), X2], axis=-1)

    def section(self) -> "CoeffSpec":
        """Coefficient of the cross-section problem (the ``A22`` block)."""
        return CoeffSpec(
            dim=self.dim_section,
            dim_axial=0,
            a11=_empty_block,
            a12=_empty_block,
            a22=self.a22,
            lambda_min=self.lambda_min,
            M=self.M,
            family={"section_of": dict(self.family)},
        )

    def reduced(self) -> "CoeffSpec":
        """Schur-complement coefficient ``A22 - A12^T A12 / a11`` on the section."""
        if self.dim_axial != 1:
            raise ConfigError("dimension reduction needs dim_axial == 1")
        if self.a11_depends_on_axial:
            raise ConfigError("dimension reduction needs a11 independent of x1")
        parent = self

        def a22_reduced(X2):
            return schur_reduced(parent, X2)

        # the Schur complement of an SPD matrix keeps the ellipticity bounds
        return CoeffSpec(
            dim=self.dim_section,
            dim_axial=0,
            a11=_empty_block,
            a12=_empty_block,
            a22=a22_reduced,
            lambda_min=self.lambda_min,
            M=self.M,
            family={"reduced_of": dict(self.family)},
        )

    def cell_matrices(self, grid: Grid) -> np.ndarray:
        if grid.ndim != self.dim:
            raise ConfigError(f"grid has {grid.ndim} axes but coefficient expects {self.dim}")
        return self.matrix_field(grid.cell_centers)


def _empty_block(x):
    return np.zeros(np.shape(x)[:-1] + (0, 0))


# -- families -----------------------------------------------------------------

def _spectral_bounds(matrix: np.ndarray) -> tuple[float, float]:
    ev = np.linalg.eigvalsh(matrix)
    return float(ev[0]), float(ev[-1])


def constant(matrix, dim_axial: int, lambda_min: float | None = None, M: float | None = None) -> CoeffSpec:
    """Spatially constant coefficient; bounds default to the extreme eigenvalues."""
    A = np.array(matrix, dtype=float, ndmin=2)
    n = A.shape[0]
    if A.shape != (n, n) or not np.allclose(A, A.T, rtol=0, atol=1e-14):
        raise ConfigError("coefficient matrix must be square and symmetric")
    m = dim_axial
    lo, hi = _spectral_bounds(A)
    lambda_min = lo if lambda_min is None else lambda_min
    M = hi if M is None else M
    A11, A12, A22 = A[:m, :m].copy(), A[:m, m:].copy(), A[m:, m:].copy()
    return CoeffSpec(
        dim=n,
        dim_axial=m,
        a11=lambda x: np.broadcast_to(A11, np.shape(x)[:-1] + A11.shape),
        a12=lambda X2: np.broadcast_to(A12, np.shape(X2)[:-1] + A12.shape),
        a22=lambda X2: np.broadcast_to(A22, np.shape(X2)[:-1] + A22.shape),
        lambda_min=float(lambda_min),
        M=float(M),
        family={"family": "constant", "matrix": A.tolist(), "dim_axial": m},
    )


def identity(n: int, dim_axial: int) -> CoeffSpec:
    return replace(constant(np.eye(n), dim_axial),
                   family={"family": "identity", "n": n, "dim_axial": dim_axial})


def coupled_2d(a: float, lambda_min: float | None = None, M: float | None = None) -> CoeffSpec:
    """``[[1, a], [a, 1]]`` on a 2D cylinder with one stretched axis."""
    return constant([[1.0, a], [a, 1.0]], 1, lambda_min, M)


def _entry_fn(entry) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(entry, (int, float)):
        c = float(entry)
        return lambda x: np.full(np.shape(x)[:-1], c)
    if isinstance(entry, Mapping):
        unknown = set(entry) - {"axis", "coeffs"}
        if unknown:
            raise ConfigError(f"unknown polynomial entry keys {sorted(unknown)}")
        axis = int(entry.get("axis", 0))
        coeffs = np.asarray(entry["coeffs"], dtype=float)
        return lambda x: P.polyval(np.asarray(x)[..., axis], coeffs)
    raise ConfigError(f"polynomial entry must be a number or {{axis, coeffs}}, got {entry!r}")


def _block_fn(rows, shape: tuple[int, int]) -> BlockFn:
    rows = [list(r) for r in rows] if shape[0] else []
    if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
        raise ConfigError(f"polynomial block must have shape {shape}")
    fns = [[_entry_fn(e) for e in r] for r in rows]

    def block(x):
        batch = np.shape(x)[:-1]
        out = np.empty(batch + shape)
        for i, r in enumerate(fns):
            for j, f in enumerate(r):
                out[..., i, j] = f(x)
        return out

    return block


def polynomial(a11, a12, a22, lambda_min: float, M: float) -> CoeffSpec:
    """Entries are constants or ``{"axis": j, "coeffs": [c0, c1, ...]}``.

    ``axis`` indexes full coordinates in ``a11`` and cross-section coordinates
    in ``a12``/``a22``. ``a22`` must be symmetric entry by entry.
    """
    a22 = [list(r) for r in a22]
    k = len(a22)
    m = len(a11)
    for i in range(k):
        for j in range(i):
            if a22[i][j] != a22[j][i]:
                raise ConfigError("a22 entries must be symmetric")
    for i in range(m):
        for j in range(i):
            if a11[i][j] != a11[j][i]:
                raise ConfigError("a11 entries must be symmetric")
    a11_depends = any(
        isinstance(e, Mapping) and int(e.get("axis", 0)) < m for r in a11 for e in r
    )
    return CoeffSpec(
        dim=m + k,
        dim_axial=m,
        a11=_block_fn(a11, (m, m)),
        a12=_block_fn(a12, (m, k)),
        a22=_block_fn(a22, (k, k)),
        lambda_min=float(lambda_min),
        M=float(M),
        family={"family": "polynomial", "a11": a11, "a12": a12, "a22": a22},
        a11_depends_on_axial=a11_depends,
    )


def from_config(cfg: Mapping[str, Any], dim_axial: int, dim_section: int) -> CoeffSpec:
    cfg = dict(cfg)
    family = cfg.pop("family", "identity")
    lam = cfg.pop("lambda_min", None)
    M = cfg.pop("M", None)
    n = dim_axial + dim_section
    if family == "identity":
        spec = identity(n, dim_axial)
    elif family == "coupled":
        if dim_axial == 0:
            raise ConfigError("the coupled family needs at least one axial axis")
        spec = constant(_coupled_matrix(n, dim_axial, float(cfg.pop("a", 0.0))), dim_axial, lam, M)
        lam = M = None
    elif family == "constant":
        matrix = np.asarray(cfg.pop("matrix"), dtype=float)
        if matrix.shape != (n, n):
            raise ConfigError(f"constant matrix must be {n}x{n}")
        spec = constant(matrix, dim_axial, lam, M)
        lam = M = None
    elif family == "polynomial":
        if lam is None or M is None:
            raise ConfigError("polynomial family needs declared lambda_min and M")
        spec = polynomial(cfg.pop("a11"), cfg.pop("a12"), cfg.pop("a22"), lam, M)
        lam = M = None
        if spec.dim != n or spec.dim_axial != dim_axial:
            raise ConfigError("polynomial blocks do not match the domain dimensions")
    else:
        raise ConfigError(f"unknown coefficient family {family!r}")
    if cfg:
        raise ConfigError(f"unknown coefficient keys {sorted(cfg)}")
    if lam is not None or M is not None:
        spec = replace(
            spec,
            lambda_min=spec.lambda_min if lam is None else float(lam),
            M=spec.M if M is None else float(M),
        )
    return spec


def _coupled_matrix(n: int, m: int, a: float) -> np.ndarray:
    """Identity with coupling ``a`` between the first axial and first section axis."""
    A = np.eye(n)
    A[0, m] = A[m, 0] = a
    return A


# -- operations ---------------------------------------------------------------

def eval_matrix(spec: CoeffSpec, point) -> np.ndarray:
    return spec.matrix_field(np.asarray(point, dtype=float))


@dataclass(frozen=True)
class EllipticityReport:
    min_rayleigh: float
    max_norm: float
    argmin_point: tuple[float, ...]
    argmax_point: tuple[float, ...]


def validate_ellipticity(spec: CoeffSpec, grid: Grid, probes: int = 100, seed: int = 0,
                         max_cells: int = 4096) -> EllipticityReport:
    """Sample ``A xi . xi`` and ``|A xi|`` at cell centers for random unit ``xi``.

    Raises EllipticityViolation when the samples contradict the declared bounds.
    """
    if probes < 100:
        raise ValueError("probes must be >= 100")
    rng = np.random.default_rng(seed)
    centers = grid.cell_centers.reshape(-1, grid.ndim)
    if len(centers) > max_cells:
        centers = centers[np.sort(rng.choice(len(centers), max_cells, replace=False))]
    A = spec.matrix_field(centers)
    if not np.allclose(A, np.swapaxes(A, -1, -2), rtol=0, atol=1e-12):
        raise EllipticityViolation("assembled coefficient is not symmetric")
    xi = rng.standard_normal((len(centers), probes, grid.ndim))
    xi /= np.linalg.norm(xi, axis=-1, keepdims=True)
    Axi = np.einsum("cij,cpj->cpi", A, xi)
    quad = np.einsum("cpi,cpi->cp", Axi, xi).min(axis=1)
    norms = np.linalg.norm(Axi, axis=-1).max(axis=1)
    i_min, i_max = int(np.argmin(quad)), int(np.argmax(norms))
    report = EllipticityReport(
        float(quad[i_min]), float(norms[i_max]),
        tuple(centers[i_min].tolist()), tuple(centers[i_max].tolist()),
    )
    if report.min_rayleigh < spec.lambda_min - 1e-9:
        raise EllipticityViolation(
            f"A xi.xi = {report.min_rayleigh:.6g} < lambda_min = {spec.lambda_min:.6g}",
            report.argmin_point,
        )
    if report.max_norm > spec.M + 1e-9:
        raise EllipticityViolation(
            f"|A| >= {report.max_norm:.6g} > M = {spec.M:.6g}", report.argmax_point
        )
    return report


def schur_reduced(spec: CoeffSpec, X2) -> np.ndarray:
    """``A22 - A12^T A12 / a11`` at cross-section points (m = 1 only)."""
    if spec.dim_axial != 1:
        raise ConfigError("schur_reduced needs dim_axial == 1")
    X2 = np.asarray(X2, dtype=float)
    a11 = spec.a11(spec.section_points(X2))[..., 0, 0]
    if np.any(a11 <= 0):
        raise ZeroA11("a11 must be positive on the cross-section")
    a12 = spec.a12(X2)[..., 0, :]
    a22 = spec.a22(X2)
    return a22 - np.einsum("...i,...j->...ij", a12, a12) / a11[..., None, None]
