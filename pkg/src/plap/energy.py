"""Discrete p-energy ``E[u] = int |A grad u . grad u|^(p/2)`` and friends.

The energy integrates the multilinear interpolant with the tensor Gauss rule
(2^n points per cell, coefficient sampled at the points). For ``p >= 2`` the
density ``t -> t^(p/2)`` of the quadratic form is C^1, so the gradient is exact
without any regularization at ``g = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .anisotropy import CoeffSpec
from .errors import ConfigError, ZeroDenominator
from .grid import Field, Grid, gauss_offsets, gradient_at, gradient_at_adjoint, points_at


@dataclass(frozen=True, eq=False)
class Problem:
    grid: Grid
    coeff: CoeffSpec
    p: float
    quad_A: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if not self.p >= 2:
            raise ConfigError(f"p must be >= 2, got {self.p}")
        if self.grid.ndim != self.coeff.dim:
            raise ConfigError(
                f"grid has {self.grid.ndim} axes but coefficient expects {self.coeff.dim}"
            )
        mats = []
        for off in self.offsets:
            A = self.coeff.matrix_field(points_at(self.grid, off))
            A.setflags(write=False)
            mats.append(A)
        object.__setattr__(self, "quad_A", tuple(mats))

    @property
    def offsets(self) -> list[tuple[float, ...]]:
        return gauss_offsets(self.grid.ndim)

    @property
    def point_weight(self) -> float:
        return self.grid.cell_volume / len(self.offsets)

    # -- array-level kernels used by the solver ---------------------------
    def _fluxes(self, values: np.ndarray):
        for off, A in zip(self.offsets, self.quad_A):
            g = gradient_at(values, self.grid, off)
            Ag = np.einsum("...ij,...j->...i", A, g)
            q = np.maximum(np.einsum("...i,...i->...", Ag, g), 0.0)
            yield off, Ag, q

    def energy_of(self, values: np.ndarray) -> float:
        half_p = 0.5 * self.p
        total = sum(float(np.sum(q ** half_p)) for _, _, q in self._fluxes(values))
        return self.point_weight * total

    def energy_and_gradient(self, values: np.ndarray) -> tuple[float, np.ndarray]:
        p, wq = self.p, self.point_weight
        E = 0.0
        G = np.zeros(self.grid.shape)
        for off, Ag, q in self._fluxes(values):
            E += float(np.sum(q ** (0.5 * p)))
            V = (wq * p) * (q ** (0.5 * (p - 2)))[..., None] * Ag
            G += gradient_at_adjoint(V, self.grid, off)
        G[self.grid.dirichlet_mask] = 0.0
        return wq * E, G

    def gradient_power_integral(self, values: np.ndarray) -> float:
        """``int |grad u|^p`` with the same quadrature as the energy."""
        total = 0.0
        for off in self.offsets:
            g = gradient_at(values, self.grid, off)
            total += float(np.sum(np.einsum("...i,...i->...", g, g) ** (0.5 * self.p)))
        return self.point_weight * total

    def mass_of(self, values: np.ndarray) -> float:
        return float(np.sum(self.grid.weights * np.abs(values) ** self.p))

    def mass_gradient(self, values: np.ndarray) -> np.ndarray:
        """Nodal derivative of ``int |u|^p``."""
        p = self.p
        dN = p * self.grid.weights * np.abs(values) ** (p - 1) * np.sign(values)
        dN[self.grid.dirichlet_mask] = 0.0
        return dN

    def energy_change(self, values: np.ndarray, delta: np.ndarray) -> float:
        """``E[u + delta] - E[u]`` computed from the increment.

        Forming the difference pointwise before summing keeps it accurate
        when it is far below the rounding level of ``E`` itself.
        """
        total = 0.0
        for off, A in zip(self.offsets, self.quad_A):
            g = gradient_at(values, self.grid, off)
            gd = gradient_at(delta, self.grid, off)
            q = np.maximum(np.einsum("...i,...ij,...j->...", g, A, g), 0.0)
            dq = np.einsum("...i,...ij,...j->...", gd, A, 2.0 * g + gd)
            total += float(np.sum(power_change(q, dq, 0.5 * self.p)))
        return self.point_weight * total

    def mass_change(self, values: np.ndarray, delta: np.ndarray) -> float:
        """``int |u + delta|^p - int |u|^p`` computed from the increment."""
        return float(np.sum(self.grid.weights * power_change(np.abs(values), _abs_change(values, delta), self.p)))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Sparse matrix of the quadratic form ``int A grad u . grad u``.

        It is the Hessian of ``E/2`` at ``p = 2``; masked rows and columns are
        kept (restrict with ``grid.free``).
        """
        grid = self.grid
        size = int(np.prod(grid.shape))
        K = sp.csr_matrix((size, size))
        for off, A in zip(self.offsets, self.quad_A):
            D = [_gradient_operator(grid, d, off) for d in range(grid.ndim)]
            for d in range(grid.ndim):
                for e in range(grid.ndim):
                    a = A[..., d, e].ravel()
                    if np.any(a != 0.0):
                        K = K + D[d].T @ sp.diags(self.point_weight * a) @ D[e]
        return K.tocsr()


def power_change(base: np.ndarray, change: np.ndarray, a: float) -> np.ndarray:
    """``(base + change)^a - base^a`` for ``base >= 0``, ``base + change >= 0``."""
    base = np.asarray(base, dtype=float)
    change = np.asarray(change, dtype=float)
    out = np.maximum(base + change, 0.0) ** a - base ** a
    ok = (base > 0) & (change > -base)
    r = change[ok] / base[ok]
    out[ok] = base[ok] ** a * np.expm1(a * np.log1p(r))
    return out


def _abs_change(values: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """``|u + delta| - |u|``, exact when the sign does not change."""
    same = np.sign(values + delta) * np.sign(values) > 0
    return np.where(same, np.sign(values) * delta, np.abs(values + delta) - np.abs(values))


def _gradient_operator(grid: Grid, axis: int, offsets) -> sp.csr_matrix:
    """Sparse matrix of one gradient component at a reference point (C order)."""
    op = sp.identity(1, format="csr")
    for e, (a, h) in enumerate(zip(grid.axes, grid.spacing)):
        k = a.size
        if e == axis:
            M = sp.diags([-np.ones(k - 1) / h, np.ones(k - 1) / h], [0, 1], shape=(k - 1, k))
        else:
            t = offsets[e]
            M = sp.diags([(1 - t) * np.ones(k - 1), t * np.ones(k - 1)], [0, 1], shape=(k - 1, k))
        op = sp.kron(op, M, format="csr")
    return op


def _check(prob: Problem, u: Field):
    if u.grid is not prob.grid and u.grid.shape != prob.grid.shape:
        raise ValueError("field and problem live on different grids")


def energy(prob: Problem, u: Field) -> float:
    _check(prob, u)
    return prob.energy_of(u.values)


def lp_norm_p(prob: Problem, u: Field) -> float:
    """``int |u|^p`` (no root taken)."""
    _check(prob, u)
    return prob.mass_of(u.values)


def rayleigh(prob: Problem, u: Field) -> float:
    N = lp_norm_p(prob, u)
    if N <= 0.0:
        raise ZeroDenominator("Rayleigh quotient of the zero field")
    return energy(prob, u) / N


def energy_gradient(prob: Problem, u: Field) -> Field:
    _check(prob, u)
    return Field(prob.energy_and_gradient(u.values)[1], prob.grid)


def residual_vector(prob: Problem, values: np.ndarray, lam: float, G: np.ndarray | None = None) -> np.ndarray:
    if G is None:
        G = prob.energy_and_gradient(values)[1]
    r = (G - lam * prob.mass_gradient(values)) / prob.p
    r[prob.grid.dirichlet_mask] = 0.0
    return r


def weak_residual(prob: Problem, u: Field, lam: float) -> float:
    """Max-norm defect of the discrete weak eigen-equation over free nodes.

    ``u`` must be normalized, ``int |u|^p = 1``.
    """
    N = lp_norm_p(prob, u)
    if abs(N - 1.0) > 1e-8:
        raise ValueError(f"weak_residual needs int |u|^p = 1, got {N:.12g}")
    return float(np.max(np.abs(residual_vector(prob, u.values, lam)), initial=0.0))
