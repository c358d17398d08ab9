"""Reference computations that share no code with the package's kernels."""

from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize


def q1_pencil(axes, mask, coeff):
    """Element-by-element Q1 stiffness (2-point Gauss per axis) and lumped mass.

    Returns dense ``(K, M)`` restricted to the unmasked nodes, C node order.
    """
    axes = [np.asarray(a, dtype=float) for a in axes]
    n = len(axes)
    shape = tuple(a.size for a in axes)
    size = int(np.prod(shape))
    K = np.zeros((size, size))
    M = np.zeros(size)
    g = 0.5 / np.sqrt(3.0)
    gauss = [0.5 - g, 0.5 + g]
    corners = list(itertools.product((0, 1), repeat=n))
    for cell in itertools.product(*[range(s - 1) for s in shape]):
        h = np.array([axes[d][cell[d] + 1] - axes[d][cell[d]] for d in range(n)])
        vol = float(np.prod(h))
        ids = [np.ravel_multi_index(tuple(c + o for c, o in zip(cell, off)), shape) for off in corners]
        for xi in itertools.product(gauss, repeat=n):
            B = np.zeros((n, len(corners)))
            for k, off in enumerate(corners):
                for d in range(n):
                    val = 1.0
                    for e in range(n):
                        if e == d:
                            continue
                        val *= xi[e] if off[e] else 1.0 - xi[e]
                    B[d, k] = (1.0 if off[d] else -1.0) / h[d] * val
            x = np.array([axes[d][cell[d]] + xi[d] * h[d] for d in range(n)])
            A = coeff.matrix_field(x[None])[0]
            K[np.ix_(ids, ids)] += (vol / 2 ** n) * B.T @ A @ B
        for i in ids:
            M[i] += vol / 2 ** n
    free = ~np.asarray(mask, dtype=bool).ravel()
    return K[np.ix_(free, free)], np.diag(M[free])


def pencil_min(K, M) -> float:
    return float(sla.eigh(K, M, eigvals_only=True, subset_by_index=[0, 0])[0])


def brute_force_1d(p: float, nodes: int = 1200) -> float:
    """First Dirichlet p-eigenvalue on (0, 1) by L-BFGS on a fine P1 mesh.

    Element energy is exact for P1; the mass uses the trapezoid rule.
    """
    h = 1.0 / nodes

    def quotient(u):
        full = np.concatenate([[0.0], u, [0.0]])
        du = np.diff(full) / h
        E = h * np.sum(np.abs(du) ** p)
        N = h * np.sum(np.abs(u) ** p)
        dE = np.zeros_like(full)
        flux = p * np.abs(du) ** (p - 2) * du
        dE[:-1] -= flux
        dE[1:] += flux
        dN = p * h * np.abs(u) ** (p - 1) * np.sign(u)
        q = E / N
        return q, (dE[1:-1] - q * dN) / N

    x = np.linspace(0, 1, nodes + 1)[1:-1]
    res = minimize(quotient, np.sin(np.pi * x), jac=True, method="L-BFGS-B",
                   options={"maxiter": 20000, "gtol": 1e-12, "ftol": 1e-15})
    return float(res.fun)


def p_sine_eigenvalue(p: float) -> float:
    """Closed-form first Dirichlet eigenvalue of the 1D p-Laplacian on (0, 1)."""
    return (p - 1) * (2 * np.pi / (p * np.sin(np.pi / p))) ** p


def lumped_1d_laplacian(h: float) -> float:
    """Smallest eigenvalue of the P1 Laplacian with lumped mass on (0, 1)."""
    return 4.0 / h ** 2 * np.sin(np.pi * h / 2) ** 2
