import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from neumann_plap import analysis as A
from neumann_plap import domains, solver

from conftest import grid


def unit_path(n):
    return domains.generate(domains.DomainSpec("path", n=n))


@pytest.fixture(scope="module")
def grid8_dipole():
    d = grid(8)
    f = domains.make_boundary_data(d, "dipole")
    return d, f, solver.solve(solver.assemble(d, 2.0, f))


# -- level sets ---------------------------------------------------------------


def test_level_set_stats_model(path3):
    st_ = A.level_set_stats(path3, np.array([1.0, 0.0, -1.0]), "a", -0.5, 1.5, 1.5, 2.0)
    assert st_.u_kr == pytest.approx(0.5, abs=1e-15)
    assert st_.psi_kR == pytest.approx(1.5, abs=1e-15)


def test_level_set_stats_above_max_is_zero(grid8_dipole):
    d, _, sol = grid8_dipole
    x = int(d.boundary_idx[0])
    st_ = A.level_set_stats(d, sol.u, x, sol.u.max() + 1.0, 3.0, 5.0, 2.0)
    assert (st_.u_kr, st_.psi_kR, st_.A_measure, st_.A_perimeter) == (0.0, 0.0, 0.0, 0.0)


def test_level_set_stats_constant_field():
    d = grid(6)
    st_ = A.level_set_stats(d, np.full(d.n, 2.5), int(d.boundary_idx[2]), 1.0, 2.0, 3.0, 3.0)
    assert st_.u_kr == pytest.approx(1.5, rel=1e-14)
    assert st_.psi_kR == pytest.approx(1.5, rel=1e-14)


def test_level_set_stats_rejects_r_above_R(path3):
    with pytest.raises(ValueError):
        A.level_set_stats(path3, np.zeros(3), "a", 0.0, 2.0, 1.5, 2.0)


@given(k=st.floats(-2, 2), r=st.floats(1.5, 4.0), extra=st.floats(0, 3), p=st.floats(1.1, 4))
def test_translation_covariance(grid8_dipole, k, r, extra, p):
    d, _, sol = grid8_dipole
    x = int(d.boundary_idx[5])
    a = A.level_set_stats(d, sol.u, x, k, r, r + extra, p)
    b = A.level_set_stats(d, sol.u + 3.7, x, k + 3.7, r, r + extra, p)
    for name in ("u_kr", "psi_kR", "A_measure", "A_perimeter"):
        assert getattr(b, name) == pytest.approx(getattr(a, name), abs=1e-12)


def test_monotone_in_k(grid8_dipole):
    d, _, sol = grid8_dipole
    for x in d.boundary_idx[::5]:
        ks = np.linspace(sol.u.min() - 0.1, sol.u.max() + 0.1, 200)
        stats = [A.level_set_stats(d, sol.u, int(x), k, 2.5, 4.0, 2.0) for k in ks]
        u_kr = [s.u_kr for s in stats]
        psi = [s.psi_kR for s in stats]
        assert all(b <= a for a, b in zip(u_kr, u_kr[1:]))
        assert all(b <= a for a, b in zip(psi, psi[1:]))


@given(h=st.floats(-1.5, 1.5), gap=st.floats(1e-6, 2.0), r=st.floats(1.5, 5.0),
       p=st.floats(1.1, 4.0), node=st.integers(0, 27))
def test_markov_bounds_exact(grid8_dipole, h, gap, r, p, node):
    d, _, sol = grid8_dipole
    x = int(d.boundary_idx[node % d.boundary_idx.size])
    assert A.markov_bounds(d, sol.u, x, h, h + gap, r, p).holds


def test_markov_requires_h_below_k(grid8_dipole):
    d, _, sol = grid8_dipole
    with pytest.raises(ValueError):
        A.markov_bounds(d, sol.u, int(d.boundary_idx[0]), 1.0, 1.0, 2.0, 2.0)


# -- cutoff ----------------------------------------------------------------------


def test_cutoff_unit_path():
    d = unit_path(5)
    eta = A.cutoff(d, "a", 1.0, 3.0)
    dist = d.graph.dist_from(0)
    assert eta[int(np.flatnonzero(dist == 2.0)[0])] == 0.5
    assert eta[0] == 1.0
    assert np.all(eta[dist >= 3.0] == 0.0)


@given(r=st.floats(0.5, 6.0), width=st.floats(0.5, 6.0), node=st.integers(0, 63))
def test_cutoff_properties(r, width, node):
    d = grid(8)
    x = node % d.n
    R = r + width
    eta = A.cutoff(d, x, r, R)
    assert np.all(eta[d.ball_mask(x, r)] == 1.0)
    assert np.all(eta[~d.ball_mask(x, R)] == 0.0)
    assert A.cutoff_slack(d, eta, r, R) <= 1e-12 / width


# -- De Giorgi ----------------------------------------------------------------------


def test_degiorgi_vacuous_above_max(grid8_dipole):
    d, f, sol = grid8_dipole
    x = d.ids[int(d.boundary_idx[0])]
    rep = A.check_degiorgi(d, sol, f, 2.0, [(x, 2.0, 4.0, sol.u.max() + 1.0)])
    row = rep.rows[0]
    assert row.lhs == 0.0 and row.rhs == 0.0
    assert rep.passed and not rep.vacuous_violations


def test_degiorgi_constant_solution(grid8_dipole):
    d, f, sol = grid8_dipole
    sample = A.degiorgi_samples(d, sol.u, 16, seed=2)
    rep = A.check_degiorgi(d, np.full(d.n, 0.3), f, 2.0, sample)
    assert rep.passed
    assert all(r.lhs == 0.0 for r in rep.rows)


def test_degiorgi_grid8_translation_and_threads(grid8_dipole):
    d, f, sol = grid8_dipole
    sample = A.degiorgi_samples(d, sol.u, 32, seed=0)
    rep = A.check_degiorgi(d, sol, f, 2.0, sample)
    assert rep.passed and math.isfinite(rep.max_ratio) and rep.gradient == "node_upper"
    moved = [(x, r, R, k + 3.7) for x, r, R, k in sample]
    rep2 = A.check_degiorgi(d, sol.u + 3.7, f, 2.0, moved, threads=3)
    for a, b in zip(rep.rows, rep2.rows):
        assert b.lhs == pytest.approx(a.lhs, rel=1e-12, abs=1e-12)
        assert b.rhs == pytest.approx(a.rhs, rel=1e-12, abs=1e-12)


def test_degiorgi_samples_deterministic(grid8_dipole):
    d, _, sol = grid8_dipole
    assert A.degiorgi_samples(d, sol.u, 20, seed=4) == A.degiorgi_samples(d, sol.u, 20, seed=4)


# -- exponents ----------------------------------------------------------------------


def test_exponent_gate():
    assert A.compute_exponents(3.0, 2.0).eligible
    assert not A.compute_exponents(5.0, 2.0).eligible
    for p in (1.1, 2.0, 3.0):
        assert A.compute_exponents(3.9, p).eligible


@given(s=st.floats(1.2, 6.0), frac=st.floats(0.02, 0.98))
def test_sigma_tau_conditions_hold(s, frac):
    p = 1.0 + frac * (s - 1.0)
    params = A.compute_exponents(s, p)
    assert params.eligible == (p * p - s * p + s > 0)
    if not params.eligible:
        assert math.isnan(params.sigma)
        return
    slacks = A.sigma_tau_conditions(params)
    assert all(v >= -1e-12 for v in slacks.values()), slacks
    assert A.conditions_hold(params)
    assert 0 < params.alpha and 0 < params.beta


def test_exponents_reject_p_at_least_s():
    with pytest.raises(A.TheoryInapplicable):
        A.compute_exponents(2.0, 2.0)


def test_effective_dimension_always_eligible():
    for s_fit, p in ((1.8, 2.0), (1.2, 3.0), (2.5, 2.0), (1.05, 1.5)):
        s = A.effective_dimension(s_fit, p)
        assert s >= s_fit and s > p
        assert A.compute_exponents(s, p).eligible


def test_ahlfors_bound_tighter_for_small_radii():
    d = grid(16, h=1 / 16)
    f = domains.make_boundary_data(d, "dipole")
    sol = solver.solve(solver.assemble(d, 2.0, f))
    params = A.compute_exponents(3.0, 2.0)
    for x in d.boundary_idx[::7]:
        for R in (0.25, 0.5, 1.0):
            b = A.decay_estimate_bounds(d, sol.u, f, int(x), -0.5, 0.1, R / 2, R, params)
            assert b.psi_bound_ahlfors <= b.psi_bound_general * (1 + 1e-12)


# -- boundedness ------------------------------------------------------------------------


def test_boundedness_model(path3, model):
    sol = solver.solve(model)
    params = A.compute_exponents(A.effective_dimension(1.0, 2.0), 2.0)
    rep = A.boundedness_iteration(path3, sol, model.f, "a", 1.4, params, k0=0.0)
    assert rep.passed and rep.final_holds
    assert rep.sup_half_ball <= rep.k0 + rep.d_used


def test_boundedness_constant_field():
    d = grid(8)
    params = A.compute_exponents(3.0, 2.0)
    rep = A.boundedness_iteration(d, np.full(d.n, 0.7), np.zeros(d.n), int(d.boundary_idx[3]),
                                  2.0, params, k0=0.7)
    assert rep.passed
    assert all(r["u_kn_rn"] == 0.0 and r["psi_kn_rn"] == 0.0 for r in rep.rows)


def test_boundedness_grid16(grid16_dipole):
    d, f, _, sol = grid16_dipole
    params = A.compute_exponents(A.effective_dimension(1.8, 2.0), 2.0)
    u_node = sol.u
    R = d.diameter(d.closed) / 5.0
    for x in d.boundary_idx[::6]:
        rep = A.boundedness_iteration(d, sol, f, int(x), R, params)
        assert rep.passed
        assert rep.sup_half_ball <= rep.k0 + rep.d_used
        assert rep.enlarge_factor <= 10.0
        half = d.ball_mask(int(x), R / 2) & d.interior & (d.mu > 0)
        assert u_node[half].max(initial=-math.inf) == rep.sup_half_ball


# -- oscillation ------------------------------------------------------------------------------


def test_oscillation_constant_solution():
    d = grid(16)
    params = A.compute_exponents(3.0, 2.0)
    rep = A.oscillation_decay(d, np.full(d.n, 2.0), np.zeros(d.n), int(d.boundary_idx[5]),
                              A.default_osc_radii(d), params)
    assert rep.passed and all(o == 0.0 for o in rep.osc)


def test_oscillation_inapplicable_on_sign_change():
    d = grid(8)
    f = domains.make_boundary_data(d, "random_compatible", seed=3)
    sol = solver.solve(solver.assemble(d, 2.0, f))
    params = A.compute_exponents(3.0, 2.0)
    rep = A.oscillation_decay(d, sol, f, int(d.boundary_idx[0]), A.default_osc_radii(d), params)
    assert rep.status == "inapplicable at x" and rep.passed is None


def test_oscillation_scan_grid16(grid16_dipole):
    d, f, _, sol = grid16_dipole
    params = A.compute_exponents(A.effective_dimension(1.8, 2.0), 2.0)
    scan = A.oscillation_scan(d, sol, f, params, threads=2)
    assert scan.passed and not scan.exceptions
    decided = [r for r in scan.reports if r.passed is not None]
    assert decided
    for r in decided:
        assert all(b <= a + 1e-12 for a, b in zip(r.osc, r.osc[1:]))


# -- subminimizer ---------------------------------------------------------------------------------


def test_subminimizer_model_near_c(path3, model):
    sol = solver.solve(model)
    rep = A.subminimizer_check(path3, sol, "c", 1.5, model.f, 2.0, trials=200, seed=1)
    assert rep.passed and rep.min_increase >= -1e-10


def test_subminimizer_refuses_negative_data(path3, model):
    sol = solver.solve(model)
    with pytest.raises(A.HypothesisRefused):
        A.subminimizer_check(path3, sol, "a", 1.5, model.f, 2.0)


def test_subminimizer_patch_grid():
    d = grid(12)
    f = domains.make_boundary_data(d, "constant_sign_patch")
    sol = solver.solve(solver.assemble(d, 2.5, f))
    fa = A._f(d, f)
    x = int(d.boundary_idx[np.argmax(fa[d.boundary_idx])])
    rep = A.subminimizer_check(d, sol, x, 3.0, f, 2.5, trials=200, seed=3)
    assert rep.passed and not rep.violations


# -- natural boundary ---------------------------------------------------------------------------


def test_natural_boundary_zero_data():
    d = grid(8)
    sol = solver.solve(solver.assemble(d, 2.0, {}))
    rep = A.natural_boundary_check(d, sol, {})
    assert rep.passed and rep.constancy_balls


def test_natural_boundary_model_vacuous(path3, model):
    rep = A.natural_boundary_check(path3, solver.solve(model), model.f)
    assert rep.passed and rep.constancy_balls == []


def test_natural_boundary_negative_control(grid16_dipole):
    d, f, _, sol = grid16_dipole
    fa = A._f(d, f)
    x0 = int(np.argmax(fa))
    fake = np.maximum(d.graph.dist_from(x0) - 4 * d.max_edge_length(), 0.0)
    rep = A.natural_boundary_check(d, fake, f)
    assert not rep.passed and rep.violations
    assert A.natural_boundary_check(d, sol, f).passed


def test_with_constant_updates_d():
    params = A.compute_exponents(3.0, 2.0)
    assert A.with_constant(params, 5.0).C == 5.0
