import numpy as np
import pytest

from plap import anisotropy as an
from plap.constructions import (
    CutoffSpec, OddProfile, cutoff_v_ell, dirichlet_upper_bound, extend_section, gap_certificate,
    interface_jumps, odd_profile, phi_ell, rho_ell, u_eps_ell,
)
from plap.eigensolver import cross_section_mu1, minimize_rayleigh, reduced_lambda, reduced_problem, section_problem
from plap.energy import Problem, lp_norm_p, rayleigh
from plap.errors import CollarTooWide, ConfigError, GeometryError
from plap.grid import GridSpec, build_grid, build_section_grid


@pytest.fixture(scope="module")
def coupled_section():
    c = an.coupled_2d(0.5)
    return c, cross_section_mu1(section_problem(c, [(0, 1)], 20, 2.0))


def test_cutoff_values():
    assert cutoff_v_ell(2.0, 0.0) == 1.0
    assert cutoff_v_ell(2.0, 2.0) == 0.0 and cutoff_v_ell(2.0, -2.0) == 0.0
    assert cutoff_v_ell(2.0, 1.5) == pytest.approx(0.5)
    with pytest.raises(ConfigError):
        cutoff_v_ell(0.0, 0.0)


def test_cutoff_slope_is_two_over_ell():
    ell = 4.0
    x = np.linspace(-ell, ell, 161)
    slope = np.max(np.abs(np.diff(cutoff_v_ell(ell, x)) / np.diff(x)))
    assert slope == pytest.approx(2.0 / ell)


def test_cutoff_tends_to_one_on_a_fixed_window():
    x = np.linspace(-1, 1, 11)
    assert np.allclose(cutoff_v_ell(1e6, x), 1.0)


def test_cutoff_spec_validation():
    with pytest.raises(ConfigError):
        CutoffSpec(1.0, beta=1.0)
    with pytest.raises(ConfigError):
        CutoffSpec(3.0, alpha=2.0, ell0=1.0)
    CutoffSpec(3.5, alpha=2.0, ell0=1.0)


def test_dirichlet_bound_is_above_the_solver_and_decays():
    c = an.coupled_2d(0.3)
    p = 2.0
    sec = cross_section_mu1(section_problem(c, [(0, 1)], 12, p))
    gaps = []
    for ell in (4.0, 8.0, 16.0):
        prob = Problem(build_grid(GridSpec(1, ell, ((0, 1),), 12)), c, p)
        ub = dirichlet_upper_bound(prob, sec.eigenfunction)
        assert ub >= minimize_rayleigh(prob).lam - 1e-7
        gaps.append(ub - sec.lam)
    assert gaps[1] / gaps[0] <= 0.6 and gaps[2] / gaps[1] <= 0.6


def test_dirichlet_bound_needs_a_dirichlet_cylinder(coupled_section):
    c, sec = coupled_section
    prob = Problem(build_grid(GridSpec(1, 1.0, ((0, 1),), 20, "mixed")), c, 2.0)
    with pytest.raises(ConfigError):
        dirichlet_upper_bound(prob, sec.eigenfunction)


def test_rho_collar():
    g = build_section_grid([(0, 1), (0, 2)], 20)
    rho = rho_ell(0.2, 0.5, g).values
    assert rho[10, 20] == 1.0
    assert np.all(rho[0] == 0) and np.all(rho[:, -1] == 0)
    dx = np.abs(np.diff(rho, axis=0)) / g.spacing[0]
    assert dx.max() <= 1 / 0.2 + 1e-9
    with pytest.raises(CollarTooWide):
        rho_ell(0.5, 0.5, g)
    with pytest.raises(ConfigError):
        rho_ell(0.2, 1.5, g)


def test_rho_collar_is_at_least_two_cells_wide():
    g = build_section_grid([(0, 1)], 20)
    rho = rho_ell(0.01, 0.5, g).values
    assert rho[1] == pytest.approx(0.5)


def test_u_eps_without_coupling_is_the_extended_eigenfunction():
    c = an.coupled_2d(0.0)
    sec = cross_section_mu1(section_problem(c, [(0, 1)], 20, 3.0))
    prob = Problem(build_grid(GridSpec(1, 0.1, ((0, 1),), 20, "mixed")), c, 3.0)
    u = u_eps_ell(prob, sec.eigenfunction)
    assert np.array_equal(u.values, extend_section(sec.eigenfunction, prob.grid))
    assert rayleigh(prob, u) == pytest.approx(sec.lam, rel=1e-12)


def test_u_eps_mass_at_least_the_even_part(coupled_section):
    c, sec = coupled_section
    for ell in (0.05, 0.2):
        prob = Problem(build_grid(GridSpec(1, ell, ((0, 1),), 20, "mixed")), c, 2.0)
        u = u_eps_ell(prob, sec.eigenfunction)
        W_mass = lp_norm_p(Problem(sec.eigenfunction.grid, c.section(), 2.0), sec.eigenfunction)
        assert lp_norm_p(prob, u) >= 2 * ell * W_mass - 1e-12


def test_u_eps_approaches_the_reduced_eigenvalue():
    c = an.coupled_2d(0.5)
    sec = cross_section_mu1(section_problem(c, [(0, 1)], 40, 2.0))
    prob = Problem(build_grid(GridSpec(1, 0.05, ((0, 1),), 40, "mixed")), c, 2.0)
    q = rayleigh(prob, u_eps_ell(prob, sec.eigenfunction))
    assert q >= minimize_rayleigh(prob).lam - 1e-7
    assert abs(q - 0.75 * np.pi ** 2) <= 0.05 * 0.75 * np.pi ** 2


def test_u_eps_needs_a_mixed_cylinder(coupled_section):
    c, sec = coupled_section
    prob = Problem(build_grid(GridSpec(1, 0.5, ((0, 1),), 20)), c, 2.0)
    with pytest.raises(ConfigError):
        u_eps_ell(prob, sec.eigenfunction)


def _glued(coupled_section, ell0=0.1, alpha=2.0):
    c, sec = coupled_section
    prof = odd_profile(c, sec.eigenfunction, ell0)
    ell = ell0 + alpha + 1.0
    prob = Problem(build_grid(GridSpec(1, ell, ((0, 1),), 20, "mixed")), c, 2.0)
    return c, sec, prof, prob, phi_ell(prob.grid, ell0, alpha, prof)


def test_phi_is_continuous_at_the_interfaces(coupled_section):
    _, _, prof, _, phi = _glued(coupled_section)
    assert interface_jumps(phi, 0.1, 2.0, prof) <= 1e-10


def test_phi_mass_splits_into_short_profile_and_ramps(coupled_section):
    c, sec, prof, prob, phi = _glued(coupled_section)
    p = 2.0
    short = Problem(build_grid(GridSpec(1, 0.1, ((0, 1),), 20, "mixed")), c, p)
    u0 = short.grid.field(prof.evaluate(short.grid.axes[0]))
    W_mass = lp_norm_p(Problem(sec.eigenfunction.grid, c.section(), p), sec.eigenfunction)
    expected = lp_norm_p(short, u0) + 2 * 2.0 / (p + 1) * W_mass
    # trapezoid error of the ramp integral is O(h^2)
    assert lp_norm_p(prob, phi) == pytest.approx(expected, rel=2e-3)


def test_phi_is_even_on_the_ramps_and_the_middle(coupled_section):
    _, _, _, prob, phi = _glued(coupled_section)
    x1 = prob.grid.axes[0]
    inner = np.abs(x1) <= x1[-1] - 0.1 + 1e-12
    vals = phi.values[inner]
    assert np.allclose(vals, vals[::-1], atol=1e-14)


def test_phi_rejects_off_grid_interfaces(coupled_section):
    c, sec = coupled_section
    prof = odd_profile(c, sec.eigenfunction, 0.1)
    g = build_grid(GridSpec(1, 3.1, ((0, 1),), 20, "mixed"))
    with pytest.raises(GeometryError):
        phi_ell(g, 0.1, 2.03, prof)


def test_odd_profile_evaluation_shape():
    prof = OddProfile(np.ones(3), np.arange(3.0))
    assert prof.evaluate([0.0, 1.0]).shape == (2, 3)


def test_certificate_for_coupled_and_uncoupled_matrices():
    p = 2.0
    cert = gap_certificate(an.coupled_2d(0.5), p, [(0, 1)], 16)
    assert cert.found and cert.margin > 0
    assert cert.resolution == 20
    Lam = reduced_lambda(reduced_problem(an.coupled_2d(0.5), [(0, 1)], cert.resolution, p)).lam
    assert cert.margin <= cert.mu1 - Lam + 1e-9
    assert not gap_certificate(an.coupled_2d(0.0), p, [(0, 1)], 16).found
