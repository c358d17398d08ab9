import numpy as np
import pytest
from oracles import lumped_1d_laplacian

from plap import anisotropy as an
from plap.asymptotics import (
    Verdict, coupling_measure, decide_gap, fit_rate, gap_detect, rescale_along_axial, richardson_eps, sweep,
)
from plap.constructions import GapCertificate
from plap.eigensolver import cross_section_mu1, minimize_rayleigh, section_problem
from plap.energy import Problem
from plap.errors import ConfigError, InsufficientData, NonPositiveGap
from plap.grid import GridSpec, build_grid

DIR = GridSpec(1, 1.0, ((0, 1),), 12)
MIX = GridSpec(1, 1.0, ((0, 1),), 12, "mixed")


def test_fit_recovers_exact_power_laws():
    ells = np.array([2.0, 4.0, 8.0, 16.0])
    fit = fit_rate(ells, 9.0 + 3.0 / ells, 9.0)
    assert fit["fitted_C"] == pytest.approx(3.0, abs=1e-6)
    assert fit["fitted_exponent"] == pytest.approx(1.0, abs=1e-6)
    assert fit_rate(ells, 9.0 + 3.0 / ells ** 2, 9.0)["fitted_exponent"] == pytest.approx(2.0, abs=1e-6)


def test_fit_errors():
    with pytest.raises(InsufficientData):
        fit_rate([1.0, 2.0], [10.0, 9.5], 9.0)
    with pytest.raises(InsufficientData):
        fit_rate([1.0, 2.0, 4.0], [10.0, 9.0, 9.0], 9.0)
    with pytest.raises(NonPositiveGap):
        fit_rate([1.0, 2.0, 4.0], [10.0, 9.5, 8.9], 9.0)


def test_dirichlet_sweep_with_the_identity_decreases_to_pi_squared():
    rep = sweep(DIR, an.identity(2, 1), 2.0, [2, 4, 8, 16])
    lam = rep.lambdas
    assert list(rep.ells) == [2, 4, 8, 16]
    assert rep.monotone_violation() <= 1e-7
    assert np.all(lam >= rep.mu1 - 1e-9)
    assert all(r.lam <= r.upper_bound + 1e-7 for r in rep.records)
    assert abs(lam[-1] - np.pi ** 2) < abs(lam[0] - np.pi ** 2)


def test_records_are_sorted_whatever_the_input_order():
    rep = sweep(DIR, an.identity(2, 1), 2.0, [4, 1, 2], upper_bounds=False)
    assert list(rep.ells) == [1, 2, 4]


def test_uncoupled_mixed_sweep_stays_at_mu1():
    rep = sweep(MIX, an.coupled_2d(0.0), 3.0, [0.5, 2.0, 8.0])
    assert np.allclose(rep.lambdas, rep.mu1, rtol=0, atol=1e-7)
    assert rep.reduced_Lambda == pytest.approx(rep.mu1, rel=1e-9)
    assert rep.coupling_measure == 0.0


def test_short_mixed_cylinders_approach_the_reduced_eigenvalue():
    rep = sweep(MIX, an.coupled_2d(0.5), 2.0, [0.4, 0.2, 0.1, 0.05])
    dist = np.abs(rep.lambdas - rep.reduced_Lambda)
    assert np.all(np.diff(dist) > 0)  # sorted by ell: closer for shorter cylinders
    assert np.all(rep.lambdas >= rep.reduced_Lambda - 1e-9)


def test_warm_cold_and_parallel_sweeps_agree():
    ells = [1.0, 2.0, 4.0]
    c = an.coupled_2d(0.3)
    warm = sweep(DIR, c, 2.5, ells)
    cold = sweep(DIR, c, 2.5, ells, warm_start=False)
    par = sweep(DIR, c, 2.5, ells, warm_start=False, jobs=2)
    assert np.allclose(warm.lambdas, cold.lambdas, rtol=1e-7)
    assert np.array_equal(cold.lambdas, par.lambdas)
    assert [r.warm_started for r in warm.records] == [False, True, True]


def test_sweep_validates_lengths():
    with pytest.raises(ConfigError):
        sweep(DIR, an.identity(2, 1), 2.0, [])
    with pytest.raises(ConfigError):
        sweep(DIR, an.identity(2, 1), 2.0, [1.0, -1.0])


def test_rescaled_warm_start_respects_the_mask():
    c = an.coupled_2d(0.3)
    u = minimize_rayleigh(Problem(build_grid(DIR.with_length(1.0)), c, 2.0)).eigenfunction
    target = build_grid(DIR.with_length(3.0))
    w = rescale_along_axial(u, target)
    assert np.all(w.values[target.dirichlet_mask] == 0)
    assert w.values.max() == pytest.approx(u.values.max(), rel=0.05)


def test_gap_decision_table():
    found = GapCertificate(found=True)
    assert decide_gap(1.0, 1.0, True) is Verdict.GAP
    assert decide_gap(0.0, 1.0, False, 0.0) is Verdict.NO_GAP
    assert decide_gap(1e-6, 1.0, True) is Verdict.UNDETERMINED
    assert decide_gap(1.0, 1.0, False) is Verdict.UNDETERMINED
    assert decide_gap(0.0, 1.0, False, 1e-3) is Verdict.UNDETERMINED
    c = an.coupled_2d(0.0)
    W = cross_section_mu1(section_problem(c, [(0, 1)], 12, 2.0)).eigenfunction
    assert gap_detect(W, c, GapCertificate(found=False))[0] is Verdict.NO_GAP
    c5 = an.coupled_2d(0.5)
    assert gap_detect(W, c5, found)[0] is Verdict.GAP


def test_coupling_measure_of_constant_coupling():
    c = an.coupled_2d(0.5)
    W = cross_section_mu1(section_problem(c, [(0, 1)], 16, 2.0)).eigenfunction
    coupling, scale = coupling_measure(W, c)
    assert coupling == pytest.approx(0.5 * scale)


def test_richardson_on_the_lumped_laplacian():
    est = richardson_eps(an.identity(1, 0), [(0, 1)], 16, 2.0)
    assert est.mu_coarse == pytest.approx(lumped_1d_laplacian(1 / 16), rel=1e-9)
    assert est.mu_extrapolated == pytest.approx(np.pi ** 2, rel=1e-5)
    assert est.eps_h == pytest.approx(np.pi ** 4 / 12 / 16 ** 2, rel=0.02)
