"""Explicit test functions giving upper-bound certificates.

All fields are built on the same node sets the solver uses, so their Rayleigh
quotients are directly comparable with computed eigenvalues:

* ``v_ell(x1) W(X2)``: product of an axial plateau cutoff and the section
  eigenfunction (Dirichlet cylinder);
* ``W - x1 rho F``: section eigenfunction with an odd axial correction
  ``F = A12.grad W / a11`` damped by a boundary collar ``rho`` (mixed
  cylinder, short lengths);
* ``phi``: a short mixed profile split at its midpoint and glued to the two
  ends of a long cylinder through linear ramps (mixed cylinder, long lengths).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .anisotropy import CoeffSpec
from .eigensolver import EigenResult, cross_section_mu1, section_problem
from .energy import Problem, rayleigh
from .errors import CollarTooWide, ConfigError, GeometryError
from .grid import BC, Field, Grid, GridSpec, build_grid, cell_to_node, gradient_array

ELL0_GRID = (0.05, 0.1, 0.2, 0.4)
ALPHA_GRID = (2.0, 4.0, 8.0, 16.0, 32.0)
SNAP = 20


@dataclass(frozen=True)
class CutoffSpec:
    """Parameters of the cutoffs. ``beta`` applies to the collar, ``alpha``
    and ``ell0`` to the glued profile."""

    ell: float
    beta: float = 0.5
    alpha: float | None = None
    ell0: float | None = None

    def __post_init__(self):
        if not self.ell > 0:
            raise ConfigError(f"ell must be > 0, got {self.ell}")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}")
        if self.alpha is not None:
            if not self.alpha > 1:
                raise ConfigError(f"alpha must be > 1, got {self.alpha}")
            if self.ell0 is None or not self.ell0 > 0:
                raise ConfigError("ell0 > 0 is required together with alpha")
            if not self.ell > self.ell0 + self.alpha:
                raise ConfigError("need ell > ell0 + alpha")


# -- axial cutoff ----------------------------------------------------------------

def cutoff_v_ell(ell: float, x) -> np.ndarray:
    """Plateau cutoff: 1 on ``|x| <= ell/2``, linear down to 0 at ``|x| = ell``."""
    if not ell > 0:
        raise ConfigError(f"ell must be > 0, got {ell}")
    x = np.abs(np.asarray(x, dtype=float))
    return np.clip(2.0 * (ell - x) / ell, 0.0, 1.0)


def extend_section(W: Field, grid: Grid) -> np.ndarray:
    """Values of ``W(X2)`` broadcast over the axial axes of ``grid``."""
    m = grid.dim_axial
    if W.grid.shape != grid.shape[m:] or not all(
        np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(W.grid.axes, grid.section_axes)
    ):
        raise GeometryError("section field does not match the cylinder's section nodes")
    return np.broadcast_to(W.values, grid.shape).copy()


def half_length(grid: Grid) -> float:
    return float(grid.axes[0][-1])


def dirichlet_trial(grid: Grid, W: Field) -> Field:
    """``prod_i v_ell(x_i) * W(X2)`` on the Dirichlet cylinder grid."""
    ell = half_length(grid)
    u = extend_section(W, grid)
    for d in range(grid.dim_axial):
        u = u * cutoff_v_ell(ell, grid.coordinate(d))
    return grid.field(u)


def dirichlet_upper_bound(prob: Problem, W: Field) -> float:
    """Rayleigh quotient of the plateau trial function; bounds the first eigenvalue."""
    if prob.grid.bc is not BC.DIRICHLET:
        raise ConfigError("dirichlet_upper_bound needs a Dirichlet cylinder")
    return rayleigh(prob, dirichlet_trial(prob.grid, W))


# -- collar and odd correction ---------------------------------------------------

def collar_width(ell: float, grid: Grid) -> float:
    return max(ell, 2.0 * max(grid.spacing))


def rho_ell(ell: float, beta: float, section_grid: Grid) -> Field:
    """Boundary collar: 1 away from the section boundary, 0 on it.

    The ramp has width ``max(ell, 2h)``; ``beta`` is validated and kept for
    reference but does not change the geometry (see the module README).
    """
    CutoffSpec(ell, beta)
    width = collar_width(ell, section_grid)
    extents = [a[-1] - a[0] for a in section_grid.axes]
    if width >= 0.5 * min(extents):
        raise CollarTooWide(f"collar width {width:g} reaches the middle of the section")
    dist = np.full(section_grid.shape, np.inf)
    for d, a in enumerate(section_grid.axes):
        x = section_grid.coordinate(d)
        dist = np.minimum(dist, np.minimum(x - a[0], a[-1] - x))
    return section_grid.field(np.clip(dist / width, 0.0, 1.0))


def correction_profile(coeff: CoeffSpec, W: Field) -> np.ndarray:
    """Nodal ``F = A12.grad W / a11``: cell values averaged onto the nodes."""
    if coeff.dim_axial != 1:
        raise ConfigError("the odd correction needs dim_axial == 1")
    sg = W.grid
    g = gradient_array(W.values, sg)
    X2 = sg.cell_centers
    a11 = coeff.a11(coeff.section_points(X2))[..., 0, 0]
    if np.any(a11 <= 0):
        from .errors import ZeroA11

        raise ZeroA11("a11 must be positive on the cross-section")
    a12 = np.broadcast_to(coeff.a12(X2), X2.shape[:-1] + (1, sg.ndim))[..., 0, :]
    F_cells = np.einsum("...i,...i->...", a12, g) / a11
    return cell_to_node(F_cells, sg)


@dataclass(frozen=True)
class OddProfile:
    """``u(x1, X2) = W(X2) - x1 * G(X2)`` with ``G = rho * F`` (section arrays)."""

    W: np.ndarray
    G: np.ndarray

    def evaluate(self, x1) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float).reshape((-1,) + (1,) * self.W.ndim)
        return self.W[None] - x1 * self.G[None]


def odd_profile(coeff: CoeffSpec, W: Field, ell: float, beta: float = 0.5) -> OddProfile:
    rho = rho_ell(ell, beta, W.grid)
    return OddProfile(W.values.copy(), rho.values * correction_profile(coeff, W))


def u_eps_ell(prob: Problem, W: Field, beta: float = 0.5) -> Field:
    """``W(X2) - x1 rho(X2) F(X2)`` on a mixed cylinder of half-length ``ell``."""
    grid = prob.grid
    if grid.bc is not BC.MIXED or grid.dim_axial != 1:
        raise ConfigError("u_eps_ell needs a mixed cylinder with one axial axis")
    extend_section(W, grid)
    prof = odd_profile(prob.coeff, W, half_length(grid), beta)
    return grid.field(prof.evaluate(grid.axes[0]))


# -- glued long-cylinder profile -------------------------------------------------

def _node_index(axis: np.ndarray, x: float) -> int:
    h = axis[1] - axis[0]
    k = int(round((x - axis[0]) / h))
    if not (0 <= k < axis.size) or abs(axis[k] - x) > 1e-9 * max(1.0, abs(x)):
        raise GeometryError(f"x1 = {x:g} is not a grid node (spacing {h:g})")
    return k


def phi_ell(grid: Grid, ell0: float, alpha: float, profile: OddProfile) -> Field:
    """Glued profile on a mixed cylinder of half-length ``ell > ell0 + alpha``.

    With ``s = |x1| - (ell - ell0)``: ``u0(sign(x1) s)`` for ``s >= 0``,
    ``(1 + s/alpha) W`` for ``-alpha <= s < 0`` and 0 in the middle.
    """
    if grid.bc is not BC.MIXED or grid.dim_axial != 1:
        raise ConfigError("phi_ell needs a mixed cylinder with one axial axis")
    ell = half_length(grid)
    CutoffSpec(ell, alpha=alpha, ell0=ell0)
    x1 = grid.axes[0]
    for b in (ell - ell0, ell - ell0 - alpha):
        _node_index(x1, b)
        _node_index(x1, -b)
    s = np.abs(x1) - (ell - ell0)
    s = np.where(np.abs(s) < 1e-12, 0.0, s)
    end = s >= 0
    values = np.zeros(grid.shape)
    values[end] = profile.evaluate(np.sign(x1[end]) * s[end])
    ramp = np.clip(1.0 + s / alpha, 0.0, 1.0)
    middle = ~end
    values[middle] = ramp[middle].reshape((-1,) + (1,) * profile.W.ndim) * profile.W[None]
    return grid.field(values)


def interface_jumps(phi: Field, ell0: float, alpha: float, profile: OddProfile) -> float:
    """Mismatch of ``phi`` at the interface nodes against the value both
    neighbouring pieces take there (``W`` at the outer ones, 0 at the inner ones)."""
    x1 = phi.grid.axes[0]
    ell = half_length(phi.grid)
    worst = 0.0
    for sgn in (1.0, -1.0):
        outer = phi.values[_node_index(x1, sgn * (ell - ell0))]
        inner = phi.values[_node_index(x1, sgn * (ell - ell0 - alpha))]
        worst = max(worst, float(np.max(np.abs(outer - profile.W))), float(np.max(np.abs(inner))))
    return worst


# -- certificate search --------------------------------------------------------

def snapped_resolution(resolution: int) -> int:
    """Smallest multiple of 20 that is >= ``resolution``; makes the search lengths grid nodes."""
    return SNAP * math.ceil(resolution / SNAP)


@dataclass
class GapCertificate:
    found: bool
    ell0: float | None = None
    alpha: float | None = None
    ell: float | None = None
    margin: float | None = None
    rayleigh: float | None = None
    mu1: float = float("nan")
    resolution: int = 0
    tried: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def gap_certificate(
    coeff: CoeffSpec,
    p: float,
    extents: Sequence[tuple[float, float]],
    resolution: int,
    *,
    section: EigenResult | None = None,
    beta: float = 0.5,
    ell0_grid: Sequence[float] = ELL0_GRID,
    alpha_grid: Sequence[float] = ALPHA_GRID,
    tol: float = 1e-9,
    max_iter: int = 50000,
) -> GapCertificate:
    """Search ``(ell0, alpha)`` for a glued profile with quotient below ``mu_1``.

    ``mu_1`` and ``W`` come from the section problem at the snapped resolution
    (``section`` may be passed if it was solved at that resolution already).
    """
    res = snapped_resolution(resolution)
    if section is None:
        section = cross_section_mu1(section_problem(coeff, extents, res, p), tol=tol, max_iter=max_iter)
    W = section.eigenfunction
    mu1 = section.lam
    cert = GapCertificate(found=False, mu1=mu1, resolution=res)
    spec = GridSpec(1, 1.0, tuple(extents), res, BC.MIXED)
    for ell0 in ell0_grid:
        try:
            prof = odd_profile(coeff, W, ell0, beta)
        except CollarTooWide:
            cert.tried.append({"ell0": ell0, "skipped": "collar too wide"})
            continue
        short = Problem(build_grid(spec.with_length(ell0)), coeff, p)
        q0 = rayleigh(short, short.grid.field(prof.evaluate(short.grid.axes[0])))
        if not q0 < mu1 * (1 - 1e-9):
            cert.tried.append({"ell0": ell0, "skipped": "short profile does not beat mu1", "rayleigh": q0})
            continue
        for alpha in alpha_grid:
            ell = ell0 + alpha + 1.0
            long = Problem(build_grid(spec.with_length(ell)), coeff, p)
            R = rayleigh(long, phi_ell(long.grid, ell0, alpha, prof))
            cert.tried.append({"ell0": ell0, "alpha": alpha, "rayleigh": R})
            if R < mu1 * (1 - 1e-9):
                cert.found = True
                cert.ell0, cert.alpha, cert.ell = ell0, alpha, ell
                cert.rayleigh, cert.margin = R, mu1 - R
                return cert
    return cert
