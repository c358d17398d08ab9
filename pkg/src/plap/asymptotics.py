"""Length sweeps, decay-rate fits and the gap decision.

A sweep solves the cylinder problem for a list of half-lengths at one fixed
node density, attaches the cross-section eigenvalue ``mu_1`` (and, for mixed
conditions, the reduced eigenvalue ``Lambda``) and optionally the plateau
upper bound, so that every record can be read as a sandwich
``mu_1 - eps_h <= lambda(ell) <= bound(ell)``.
"""

from __future__ import annotations

import enum
import logging
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .anisotropy import CoeffSpec
from .constructions import GapCertificate, dirichlet_upper_bound
from .eigensolver import EigenResult, cross_section_mu1, minimize_rayleigh, reduced_lambda, reduced_problem, section_problem
from .energy import Problem
from .errors import ConfigError, InsufficientData, NonPositiveGap
from .grid import BC, Field, Grid, GridSpec, build_grid, gradient_array

log = logging.getLogger(__name__)

GAP_THRESHOLD = 1e-3


class Verdict(str, enum.Enum):
    GAP = "Gap"
    NO_GAP = "NoGap"
    UNDETERMINED = "Undetermined"


@dataclass
class SweepRecord:
    ell: float
    lam: float
    residual: float
    iterations: int
    converged: bool
    wall_time: float = 0.0
    upper_bound: float | None = None
    warm_started: bool = False

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        if not timing:
            d.pop("wall_time")
        return d


@dataclass
class SweepReport:
    bc: BC
    p: float
    records: list[SweepRecord]
    mu1: float
    reduced_Lambda: float | None = None
    coupling_measure: float | None = None
    coupling_scale: float | None = None
    fitted_C: float | None = None
    fitted_exponent: float | None = None
    gap: Verdict | None = None
    eps_h: float | None = None
    eigenfunctions: dict = field(default_factory=dict, repr=False)

    @property
    def ells(self) -> np.ndarray:
        return np.array([r.ell for r in self.records])

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    def monotone_violation(self) -> float:
        """Largest increase of ``lambda`` between consecutive lengths (0 if none)."""
        lam = self.lambdas
        return float(max(0.0, np.max(np.diff(lam), initial=0.0)))

    def summary(self) -> dict:
        return {
            "bc": self.bc.value,
            "p": self.p,
            "mu1": self.mu1,
            "reduced_Lambda": self.reduced_Lambda,
            "coupling_measure": self.coupling_measure,
            "coupling_scale": self.coupling_scale,
            "fitted_C": self.fitted_C,
            "fitted_exponent": self.fitted_exponent,
            "gap": None if self.gap is None else self.gap.value,
            "eps_h": self.eps_h,
        }


# -- warm starts -----------------------------------------------------------------

def rescale_along_axial(u: Field, grid: Grid) -> Field:
    """Transfer ``u`` to ``grid`` by stretching the axial coordinates.

    Both grids must share the cross-section nodes; the axial variable is
    mapped ``x -> x * ell_old / ell_new`` before interpolation.
    """
    src = u.grid
    m = grid.dim_axial
    if src.dim_axial != m or src.shape[m:] != grid.shape[m:]:
        raise ConfigError("warm start needs matching cross-sections")
    ratio = src.axes[0][-1] / grid.axes[0][-1]
    interp = RegularGridInterpolator(src.axes, u.values, bounds_error=False, fill_value=0.0)
    pts = list(np.meshgrid(*grid.axes, indexing="ij"))
    for d in range(m):
        pts[d] = np.clip(pts[d] * ratio, src.axes[d][0], src.axes[d][-1])
    vals = interp(np.stack(pts, axis=-1))
    return grid.field(np.abs(vals))


# -- sweep -----------------------------------------------------------------------

_WORK: dict = {}


def _solve_one(ell: float) -> tuple[float, EigenResult]:
    w = _WORK
    prob = Problem(build_grid(w["spec"].with_length(ell)), w["coeff"], w["p"])
    return ell, minimize_rayleigh(prob, tol=w["tol"], max_iter=w["max_iter"])


def _solve_warm(prob: Problem, prev: EigenResult | None, tol: float, max_iter: int) -> tuple[EigenResult, bool]:
    if prev is not None:
        res = minimize_rayleigh(prob, init=rescale_along_axial(prev.eigenfunction, prob.grid), tol=tol, max_iter=max_iter)
        if res.converged:
            return res, True
        log.info("warm start did not converge at ell=%g; retrying cold", prob.grid.axes[0][-1])
        cold = minimize_rayleigh(prob, tol=tol, max_iter=max_iter)
        return (cold, False) if cold.converged or cold.lam < res.lam else (res, True)
    return minimize_rayleigh(prob, tol=tol, max_iter=max_iter), False


def sweep(
    spec: GridSpec,
    coeff: CoeffSpec,
    p: float,
    ells: Sequence[float],
    *,
    tol: float = 1e-8,
    max_iter: int = 50000,
    warm_start: bool = True,
    jobs: int = 1,
    section: EigenResult | None = None,
    upper_bounds: bool = True,
    reduced: bool = True,
    keep_eigenfunctions: bool = False,
) -> SweepReport:
    """Solve the cylinder problem of ``spec`` for every half-length in ``ells``.

    Records are returned sorted by length. Solves run in the given order so
    that warm starts follow it; with ``warm_start=False`` and ``jobs > 1`` they
    run in worker processes.
    """
    ells = [float(e) for e in ells]
    if not ells:
        raise ConfigError("ells must not be empty")
    if any(not e > 0 for e in ells):
        raise ConfigError("ells must be positive")
    extents = spec.section_extents
    if section is None:
        section = cross_section_mu1(section_problem(coeff, extents, spec.resolution, p), tol=tol, max_iter=max_iter)
    W = section.eigenfunction

    results: dict[float, tuple[EigenResult, bool]] = {}
    if not warm_start and jobs > 1 and "fork" in multiprocessing.get_all_start_methods():
        _WORK.update(spec=spec, coeff=coeff, p=p, tol=tol, max_iter=max_iter)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=jobs, mp_context=ctx) as pool:
                for ell, res in pool.map(_solve_one, ells):
                    results[ell] = (res, False)
        finally:
            _WORK.clear()
    else:
        prev = None
        for ell in ells:
            prob = Problem(build_grid(spec.with_length(ell)), coeff, p)
            res, warm = _solve_warm(prob, prev if warm_start else None, tol, max_iter)
            results[ell] = (res, warm)
            prev = res

    records = []
    efuns = {}
    for ell in sorted(results):
        res, warm = results[ell]
        ub = None
        if upper_bounds and spec.bc is BC.DIRICHLET:
            ub = dirichlet_upper_bound(Problem(res.eigenfunction.grid, coeff, p), W)
        records.append(
            SweepRecord(ell, res.lam, res.residual, res.iterations, res.converged, res.wall_time, ub, warm)
        )
        if keep_eigenfunctions:
            efuns[ell] = res.eigenfunction
    report = SweepReport(spec.bc, p, records, section.lam, eigenfunctions=efuns)
    if coeff.dim_axial == 1:
        report.coupling_measure, report.coupling_scale = coupling_measure(W, coeff)
    if reduced and spec.bc is BC.MIXED and not coeff.a11_depends_on_axial:
        report.reduced_Lambda = reduced_lambda(
            reduced_problem(coeff, extents, spec.resolution, p), tol=tol, max_iter=max_iter
        ).lam
    return report


# -- rate fit --------------------------------------------------------------------

def fit_rate(ells: Sequence[float], lambdas: Sequence[float], mu1: float, tol: float = 1e-9) -> dict:
    """Least-squares fit of ``log(lambda - mu1) = log C - q log ell``.

    Gaps within ``tol`` of zero are dropped; a gap below ``-tol`` raises
    :class:`NonPositiveGap`.
    """
    ells = np.asarray(ells, dtype=float)
    gaps = np.asarray(lambdas, dtype=float) - mu1
    if np.any(gaps < -tol):
        bad = ells[gaps < -tol]
        raise NonPositiveGap(f"lambda < mu1 at ell = {bad.tolist()} (discretization error?)")
    use = gaps > tol
    if use.sum() < 3:
        raise InsufficientData(f"need 3 records with lambda > mu1, have {int(use.sum())}")
    slope, intercept = np.polyfit(np.log(ells[use]), np.log(gaps[use]), 1)
    return {"fitted_C": float(np.exp(intercept)), "fitted_exponent": float(-slope)}


def fit_report(report: SweepReport, tol: float = 1e-9) -> dict:
    recs = [r for r in report.records if r.converged]
    fit = fit_rate([r.ell for r in recs], [r.lam for r in recs], report.mu1, tol)
    report.fitted_C = fit["fitted_C"]
    report.fitted_exponent = fit["fitted_exponent"]
    return fit


# -- gap decision ----------------------------------------------------------------

def coupling_measure(W: Field, coeff: CoeffSpec) -> tuple[float, float]:
    """``(sum vol |A12 . grad W|, sum vol |grad W|)`` over section cells."""
    if coeff.dim_axial != 1:
        raise ConfigError("coupling measure needs dim_axial == 1")
    sg = W.grid
    g = gradient_array(W.values, sg)
    a12 = np.broadcast_to(coeff.a12(sg.cell_centers), g.shape[:-1] + (1, sg.ndim))[..., 0, :]
    vol = sg.cell_volume
    coupling = vol * float(np.sum(np.abs(np.einsum("...i,...i->...", a12, g))))
    scale = vol * float(np.sum(np.linalg.norm(g, axis=-1)))
    return coupling, scale


def gap_detect(
    W: Field,
    coeff: CoeffSpec,
    certificate: GapCertificate | None,
    *,
    mixed_deviation: float | None = None,
    threshold: float = GAP_THRESHOLD,
    tol: float = 1e-6,
) -> tuple[Verdict, float]:
    """Decide whether the mixed eigenvalue stays below ``mu_1`` for long cylinders.

    ``Gap`` needs both a coupling above ``threshold`` (relative to the
    ``int |grad W|`` scale) and a certificate that was found. ``NoGap`` needs
    a coupling below it, no certificate, and, when ``mixed_deviation``
    (``max |lambda_M - mu_1|`` over a sweep) is given, a deviation within
    ``tol``. Everything else is ``Undetermined``.
    """
    coupling, scale = coupling_measure(W, coeff)
    found = certificate is not None and certificate.found
    return decide_gap(coupling, scale, found, mixed_deviation, threshold=threshold, tol=tol), coupling


def decide_gap(
    coupling: float,
    scale: float,
    found: bool,
    mixed_deviation: float | None = None,
    *,
    threshold: float = GAP_THRESHOLD,
    tol: float = 1e-6,
) -> Verdict:
    """Decision table behind :func:`gap_detect`, on stored numbers."""
    strong = coupling > threshold * scale
    if strong and found:
        return Verdict.GAP
    flat = mixed_deviation is None or mixed_deviation <= tol
    if not strong and not found and flat:
        return Verdict.NO_GAP
    return Verdict.UNDETERMINED


# -- discretization error --------------------------------------------------------

@dataclass
class RichardsonEstimate:
    mu_coarse: float
    mu_fine: float
    mu_extrapolated: float
    eps_h: float


def richardson_eps(
    coeff: CoeffSpec,
    extents: Sequence[tuple[float, float]],
    resolution: int,
    p: float,
    *,
    tol: float = 1e-9,
    max_iter: int = 50000,
    order: float = 2.0,
) -> RichardsonEstimate:
    """Section eigenvalue at ``resolution`` and twice it, extrapolated in ``h``."""
    mu_r = cross_section_mu1(section_problem(coeff, extents, resolution, p), tol=tol, max_iter=max_iter).lam
    mu_2r = cross_section_mu1(section_problem(coeff, extents, 2 * resolution, p), tol=tol, max_iter=max_iter).lam
    mu_ext = mu_2r + (mu_2r - mu_r) / (2.0 ** order - 1.0)
    return RichardsonEstimate(mu_r, mu_2r, mu_ext, abs(mu_r - mu_ext))
