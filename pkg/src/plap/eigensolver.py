"""First eigenpair by projected gradient descent on the sphere ``int |u|^p = 1``.

Each step moves along a search direction, rescales back onto the sphere and
backtracks (Armijo) on the Rayleigh quotient, so the quotient never increases.
The direction is the gradient preconditioned by the linear (p = 2) stiffness
matrix of the same coefficient; the step length starts from a
Barzilai-Borwein estimate in that metric.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .anisotropy import CoeffSpec
from .energy import Problem, residual_vector
from .errors import EmptyInterior, NotConverged
from .grid import BC, Field, Grid, build_section_grid

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
SHRINK = 0.5
STEP_MIN, STEP_MAX = 1e-12, 1e3
PLATEAU = 10
ROUNDING = 1e-11


@dataclass
class EigenResult:
    lam: float
    eigenfunction: Field
    residual: float
    iterations: int
    converged: bool
    history: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    wall_time: float = 0.0

    def summary(self) -> dict:
        return {
            "lambda": self.lam,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def pinned_axes(grid: Grid) -> list[int]:
    """Axes whose two boundary faces are entirely masked."""
    out = []
    for d in range(grid.ndim):
        lo = np.take(grid.dirichlet_mask, 0, axis=d)
        hi = np.take(grid.dirichlet_mask, -1, axis=d)
        if lo.all() and hi.all():
            out.append(d)
    return out


def default_init(grid: Grid) -> Field:
    """Product of half-period sine bumps over pinned axes, constant elsewhere."""
    u = np.ones(grid.shape)
    for d in pinned_axes(grid):
        a = grid.axes[d]
        u = u * np.sin(np.pi * (grid.coordinate(d) - a[0]) / (a[-1] - a[0]))
    return grid.field(u)


class _Preconditioner:
    def __init__(self, prob: Problem, free: np.ndarray):
        K = prob.stiffness[free][:, free]
        w = prob.grid.weights.ravel()[free]
        shift = 1e-8 * K.diagonal().mean() / w.mean()
        self.P = (K + sp.diags(shift * w)).tocsc()
        self._lu = spla.splu(self.P)

    def solve(self, r: np.ndarray) -> np.ndarray:
        return self._lu.solve(r)

    def inner(self, x: np.ndarray) -> float:
        return float(x @ (self.P @ x))


class _Identity:
    def solve(self, r):
        return r

    def inner(self, x):
        return float(x @ x)


def _normalize(prob: Problem, values: np.ndarray) -> np.ndarray:
    return values / prob.mass_of(values) ** (1.0 / prob.p)


def minimize_rayleigh(
    prob: Problem,
    init: Field | None = None,
    tol: float = 1e-8,
    max_iter: int = 50000,
    *,
    precondition: bool = True,
    restarts: int = 0,
    seed: int = 0,
    strict: bool = False,
) -> EigenResult:
    """Minimize ``E[u] / int |u|^p`` over fields respecting the grid mask.

    ``restarts`` extra solves start from randomized positive perturbations of
    the default initial field; the lowest eigenvalue wins. With ``strict`` a
    non-converged solve raises :class:`NotConverged` (carrying the result).
    """
    grid = prob.grid
    if not grid.free.any():
        raise EmptyInterior("every node is masked")
    if tol <= 0:
        raise ValueError("tol must be positive")
    precond = _Preconditioner(prob, grid.free.ravel()) if precondition else _Identity()
    starts = [default_init(grid) if init is None else init]
    rng = np.random.default_rng(seed)
    base = default_init(grid).values
    for _ in range(restarts):
        starts.append(grid.field(base * (1.0 + 0.5 * rng.random(grid.shape))))
    best = None
    for start in starts:
        res = _descend(prob, start.values, tol, max_iter, precond)
        if best is None or res.lam < best.lam:
            best = res
    if not best.converged:
        log.warning("eigensolver stopped after %d iterations (residual %.3g)", best.iterations, best.residual)
        if strict:
            raise NotConverged(f"no convergence in {max_iter} iterations", best)
    return best


def _descend(prob: Problem, u0: np.ndarray, tol: float, max_iter: int, precond) -> EigenResult:
    t0 = time.perf_counter()
    grid = prob.grid
    free = grid.free.ravel()
    p = prob.p

    u = np.array(u0, dtype=float)
    u[grid.dirichlet_mask] = 0.0
    if prob.mass_of(u) <= 0.0:
        raise ValueError("initial field vanishes on the free nodes")
    u = _normalize(prob, u)

    def state(values):
        E, G = prob.energy_and_gradient(values)
        lam = E / prob.mass_of(values)
        grad = residual_vector(prob, values, lam, G) * p
        return lam, grad

    lam, grad = state(u)
    history = [lam]
    step = 1.0 / p
    plateau = 0
    converged = False
    it = 0
    residual = float(np.max(np.abs(grad))) / p
    for it in range(1, max_iter + 1):
        g = grad.ravel()[free]
        d = precond.solve(g)
        slope = float(g @ d)
        if slope <= 0.0:
            break
        x = u.ravel()[free]
        N = prob.mass_of(u)
        direction = np.zeros(u.size)
        direction[free] = -d
        direction = direction.reshape(u.shape)
        s = min(max(step, STEP_MIN), STEP_MAX)
        while True:
            trial = u + s * direction
            mass = prob.mass_of(trial)
            if mass > 0.0:
                dlam = prob.energy_of(trial) / mass - lam
                if abs(dlam) < ROUNDING * lam:
                    # recompute from the increment: stays meaningful below the rounding level of lam
                    dN = prob.mass_change(u, s * direction)
                    dlam = (prob.energy_change(u, s * direction) - lam * dN) / (N + dN)
                if dlam <= -ARMIJO_C * s * slope:
                    break
            s *= SHRINK
            if s < STEP_MIN:
                trial = None
                break
        if trial is None:
            break
        u_new = _normalize(prob, trial)
        lam_new, grad_new = state(u_new)

        x_new, g_new = u_new.ravel()[free], grad_new.ravel()[free]
        dx, dg = x_new - x, g_new - g
        denom = float(dx @ dg)
        step = precond.inner(dx) / denom if denom > 0 else 2.0 * s

        rel = abs(lam - lam_new) / max(abs(lam_new), 1e-300)
        u, grad = u_new, grad_new
        lam = lam_new
        history.append(lam)
        residual = float(np.max(np.abs(grad))) / p
        plateau = plateau + 1 if rel < tol else 0
        if plateau >= PLATEAU and residual < 10 * tol:
            converged = True
            break

    u = _canonical_sign(prob, u)
    lam = prob.energy_of(u) / prob.mass_of(u)
    residual = float(np.max(np.abs(residual_vector(prob, u, lam)), initial=0.0))
    if not converged and residual < 10 * tol and plateau >= PLATEAU:
        converged = True
    return EigenResult(
        lam=float(lam),
        eigenfunction=Field(u, grid),
        residual=residual,
        iterations=it,
        converged=converged,
        history=np.asarray(history),
        wall_time=time.perf_counter() - t0,
    )


SIGN_FLOOR = 1e-3


def _canonical_sign(prob: Problem, u: np.ndarray) -> np.ndarray:
    """Flip so the nodal max is positive, then project out small negatives.

    Negatives below ``SIGN_FLOOR`` times the max only appear where the
    eigenfunction is below the solver tolerance; larger ones are kept so the
    caller can see a sign-changing iterate.
    """
    if -u.min() > u.max():
        u = -u
    if u.min() < 0.0:
        if -u.min() <= SIGN_FLOOR * u.max():
            u = _normalize(prob, np.maximum(u, 0.0))
        else:
            log.warning("eigenfunction changes sign (min/max = %.3g)", u.min() / u.max())
    return u


# -- problem builders -----------------------------------------------------------

def section_problem(coeff: CoeffSpec, extents: Sequence[tuple[float, float]], resolution: int, p: float) -> Problem:
    """Cross-section problem on ``omega_2`` with the ``A22`` block."""
    sec = coeff.section() if coeff.dim_axial else coeff
    return Problem(build_section_grid(extents, resolution), sec, p)


def reduced_problem(coeff: CoeffSpec, extents: Sequence[tuple[float, float]], resolution: int, p: float) -> Problem:
    """Cross-section problem with the Schur-reduced coefficient."""
    return Problem(build_section_grid(extents, resolution), coeff.reduced(), p)


def cross_section_mu1(section_prob: Problem, tol: float = 1e-8, max_iter: int = 50000, **kw) -> EigenResult:
    """``(mu_1, W)`` of the cross-section Dirichlet problem."""
    if section_prob.grid.dim_axial != 0 or section_prob.grid.bc is not BC.DIRICHLET:
        raise ValueError("cross_section_mu1 expects a Dirichlet section grid")
    return minimize_rayleigh(section_prob, tol=tol, max_iter=max_iter, **kw)


def reduced_lambda(reduced_prob: Problem, tol: float = 1e-8, max_iter: int = 50000, **kw) -> EigenResult:
    """Eigenvalue of the dimension-reduced (Schur complement) problem."""
    return cross_section_mu1(reduced_prob, tol=tol, max_iter=max_iter, **kw)
