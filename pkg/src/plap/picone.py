"""Pointwise Picone identity for the anisotropic p-Laplacian.

For ``u >= 0``, ``v > 0`` and SPD ``A``::

    L(u, v) = |A du.du|^(p/2) - p u^(p-1) |A dv.dv|^((p-2)/2) (A dv.du) / v^(p-1)
              + (p-1) u^p |A dv.dv|^((p-2)/2) (A dv.dv) / v^p
    R(u, v) = |A du.du|^(p/2) - d(u^p / v^(p-1)) . |A dv.dv|^((p-2)/2) A dv

and ``L = R >= 0``, with ``L = 0`` exactly where ``d(u/v) = 0``. ``L`` and ``R``
are computed along independent routes so that their agreement is a check.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .anisotropy import CoeffSpec
from .errors import NonpositiveV
from .grid import Field, cell_average, gradient_array

V_FLOOR = 1e-12
EQ_TOL = 1e-10
RATIO_TOL = 1e-6


def _validate(u_val, v_val):
    if np.any(np.asarray(u_val) < 0):
        raise ValueError("u must be nonnegative")
    if np.any(~(np.asarray(v_val) > 0)):
        raise NonpositiveV("v must be strictly positive")


def _terms(u_val, grad_u, v_val, grad_v, A, p):
    u = np.asarray(u_val, dtype=float)
    v = np.asarray(v_val, dtype=float)
    Adu = np.einsum("...ij,...j->...i", A, grad_u)
    Adv = np.einsum("...ij,...j->...i", A, grad_v)
    quu = np.maximum(np.einsum("...i,...i->...", Adu, grad_u), 0.0)
    qvv = np.maximum(np.einsum("...i,...i->...", Adv, grad_v), 0.0)
    quv = np.einsum("...i,...i->...", Adv, grad_u)
    t1 = quu ** (0.5 * p)
    t2 = p * u ** (p - 1) * qvv ** (0.5 * (p - 2)) * quv / v ** (p - 1)
    t3 = (p - 1) * u ** p * qvv ** (0.5 * (p - 2)) * qvv / v ** p
    return t1, t2, t3


def picone_L(u_val, grad_u, v_val, grad_v, A, p):
    """Three-term form of the Picone expression (vectorized)."""
    _validate(u_val, v_val)
    t1, t2, t3 = _terms(u_val, grad_u, v_val, grad_v, A, p)
    return t1 - t2 + t3


def picone_R(u_val, grad_u, v_val, grad_v, A, p):
    """Form using the product-rule gradient of ``u^p / v^(p-1)``."""
    _validate(u_val, v_val)
    u = np.asarray(u_val, dtype=float)[..., None]
    v = np.asarray(v_val, dtype=float)[..., None]
    grad_u = np.asarray(grad_u, dtype=float)
    grad_v = np.asarray(grad_v, dtype=float)
    d_ratio = p * u ** (p - 1) * grad_u / v ** (p - 1) - (p - 1) * u ** p * grad_v / v ** p
    Adu = np.einsum("...ij,...j->...i", A, grad_u)
    Adv = np.einsum("...ij,...j->...i", A, grad_v)
    quu = np.maximum(np.einsum("...i,...i->...", Adu, grad_u), 0.0)
    qvv = np.maximum(np.einsum("...i,...i->...", Adv, grad_v), 0.0)
    flux = qvv[..., None] ** (0.5 * (p - 2)) * Adv
    return quu ** (0.5 * p) - np.einsum("...i,...i->...", d_ratio, flux)


def term_scale(u_val, grad_u, v_val, grad_v, A, p):
    """``max(1, |t1|, |t2|, |t3|)``: magnitude used for relative tolerances."""
    t1, t2, t3 = _terms(u_val, grad_u, v_val, grad_v, A, p)
    return np.maximum.reduce([np.ones_like(t1), np.abs(t1), np.abs(t2), np.abs(t3)])


def ratio_gradient(u_val, grad_u, v_val, grad_v):
    """``grad(u/v)`` from point data by the quotient rule."""
    u = np.asarray(u_val, dtype=float)[..., None]
    v = np.asarray(v_val, dtype=float)[..., None]
    return (v * np.asarray(grad_u) - u * np.asarray(grad_v)) / v ** 2


@dataclass
class PiconeReport:
    max_abs_L_minus_R: float
    max_rel_L_minus_R: float
    min_L: float
    min_L_scaled: float
    equality_locus_fraction: float
    grad_ratio_deviation: float
    locus_violations: int
    cells: int
    passed: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _report(L, R, scale, locus_data, eq_tol, ratio_tol, cells) -> PiconeReport:
    diff = np.abs(L - R)
    scaled_L = L / scale
    u_c, gu, v_c, gv, considered = locus_data
    locus = considered & (scaled_L < eq_tol)
    n_considered = int(considered.sum())
    if locus.any():
        dev = np.linalg.norm(ratio_gradient(u_c[locus], gu[locus], v_c[locus], gv[locus]), axis=-1)
        bound = ratio_tol * (np.linalg.norm(gu[locus], axis=-1) + np.linalg.norm(gv[locus], axis=-1))
        deviation = float(dev.max())
        violations = int(np.sum(dev > bound))
    else:
        deviation, violations = 0.0, 0
    rel = float(np.max(diff / scale, initial=0.0))
    min_scaled = float(np.min(scaled_L, initial=np.inf))
    return PiconeReport(
        max_abs_L_minus_R=float(np.max(diff, initial=0.0)),
        max_rel_L_minus_R=rel,
        min_L=float(np.min(L, initial=np.inf)),
        min_L_scaled=min_scaled,
        equality_locus_fraction=(int(locus.sum()) / n_considered) if n_considered else 0.0,
        grad_ratio_deviation=deviation,
        locus_violations=violations,
        cells=cells,
        passed=bool(rel <= 1e-9 and min_scaled >= -1e-9 and violations == 0),
    )


def picone_check(
    u: Field,
    v: Field,
    coeff: CoeffSpec,
    p: float,
    samples: int | None = None,
    *,
    eq_tol: float = EQ_TOL,
    ratio_tol: float = RATIO_TOL,
    seed: int = 0,
) -> PiconeReport:
    """Evaluate ``L`` and ``R`` from cell-center data of two nodal fields.

    ``u`` and ``v`` must share node coordinates (their masks may differ).
    Cells touching a node where ``v`` vanishes are left out of the
    equality-locus statistics.
    """
    if u.grid.shape != v.grid.shape or not all(
        np.array_equal(a, b) for a, b in zip(u.grid.axes, v.grid.axes)
    ):
        raise ValueError("u and v must live on the same nodes")
    if np.any(u.values < 0):
        raise ValueError("u must be nonnegative")
    if np.any(v.values[v.grid.free] < V_FLOOR):
        raise NonpositiveV(f"v must be >= {V_FLOOR} on its free nodes")
    grid = u.grid
    u_c = cell_average(u.values, grid).reshape(-1)
    v_c = cell_average(v.values, grid).reshape(-1)
    gu = gradient_array(u.values, grid).reshape(-1, grid.ndim)
    gv = gradient_array(v.values, grid).reshape(-1, grid.ndim)
    A = coeff.matrix_field(grid.cell_centers).reshape(-1, grid.ndim, grid.ndim)
    interior = cell_average((v.values > V_FLOOR).astype(float), grid).reshape(-1) == 1.0
    keep = v_c >= V_FLOOR
    if samples is not None and samples < keep.sum():
        idx = np.flatnonzero(keep)
        pick = np.random.default_rng(seed).choice(idx, samples, replace=False)
        keep = np.zeros_like(keep)
        keep[pick] = True
    u_c, v_c, gu, gv, A, interior = (a[keep] for a in (u_c, v_c, gu, gv, A, interior))
    L = picone_L(u_c, gu, v_c, gv, A, p)
    R = picone_R(u_c, gu, v_c, gv, A, p)
    scale = term_scale(u_c, gu, v_c, gv, A, p)
    return _report(L, R, scale, (u_c, gu, v_c, gv, interior), eq_tol, ratio_tol, int(keep.sum()))


def random_spd(rng: np.random.Generator, n: int, lo: float = 0.1, hi: float = 10.0) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (Q * rng.uniform(lo, hi, n)) @ Q.T


def picone_fuzz(
    draws: int = 200,
    seed: int = 0,
    ps=(2.0, 2.5, 3.0, 4.0),
    *,
    eq_tol: float = EQ_TOL,
    ratio_tol: float = RATIO_TOL,
    l_func: Callable = picone_L,
) -> PiconeReport:
    """Random admissible point data; every fourth draw sits on the equality locus.

    ``l_func`` replaces :func:`picone_L` (used to self-test the harness).
    """
    rng = np.random.default_rng(seed)
    Ls, Rs, scales = [], [], []
    rows = []
    for k in range(draws):
        n = int(rng.integers(1, 4))
        p = float(ps[k % len(ps)])
        A = random_spd(rng, n)
        gv = rng.standard_normal(n) * rng.choice([1e-2, 1.0, 10.0])
        v = float(rng.uniform(1e-2, 3.0))
        kind = k % 4
        if kind == 3:
            c = float(rng.uniform(0.0, 3.0))
            u, gu = c * v, c * gv
        elif kind == 2:
            u, gu = 0.0, rng.standard_normal(n)
        else:
            u, gu = float(rng.uniform(0.0, 3.0)), rng.standard_normal(n) * rng.choice([1e-2, 1.0, 10.0])
        Ls.append(float(l_func(u, gu, v, gv, A, p)))
        Rs.append(float(picone_R(u, gu, v, gv, A, p)))
        scales.append(float(term_scale(u, gu, v, gv, A, p)))
        rows.append((u, gu, v, gv))
    # ragged dimensions: evaluate the locus statistics draw by draw
    L, R, scale = map(np.asarray, (Ls, Rs, scales))
    locus = (L / scale) < eq_tol
    dev_max, violations = 0.0, 0
    for k in np.flatnonzero(locus):
        u, gu, v, gv = rows[k]
        dev = float(np.linalg.norm(ratio_gradient(u, gu, v, gv)))
        dev_max = max(dev_max, dev)
        if dev > ratio_tol * (np.linalg.norm(gu) + np.linalg.norm(gv)):
            violations += 1
    rel = float(np.max(np.abs(L - R) / scale))
    min_scaled = float(np.min(L / scale))
    return PiconeReport(
        max_abs_L_minus_R=float(np.max(np.abs(L - R))),
        max_rel_L_minus_R=rel,
        min_L=float(L.min()),
        min_L_scaled=min_scaled,
        equality_locus_fraction=float(locus.mean()),
        grad_ratio_deviation=dev_max,
        locus_violations=violations,
        cells=draws,
        passed=bool(rel <= 1e-9 and min_scaled >= -1e-9 and violations == 0),
    )
