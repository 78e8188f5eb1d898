"""Saddle iteration, certified bounds, and the verification operations."""

import math

import numpy as np
import pytest

from ferrosaddle.energies import (PhysicalParams, gain_field,
                                  gravity_perimeter_cost, saddle_objective)
from ferrosaddle.grid import (DomainSpec, NotAGraphError, graph_from_indicator,
                              indicator_from_graph, lateral_node_mask,
                              zero_potential)
from ferrosaddle.maglaw import MagnetizationLaw, growth_constant
from ferrosaddle.outer import binarize, maximize_gain
from ferrosaddle.saddle import (SaddleOptions, bubble_census,
                                check_bottom_distance, check_energy_minimality,
                                check_linear_duality,
                                check_nontrivial_potential, check_norm_bound,
                                free_surface_residual,
                                interface_potential_jump, probe_saddle,
                                solve_saddle)

LIN = MagnetizationLaw.linear(2.0)
PAR = PhysicalParams(b=1.0, tau=0.1, mu_drive=2.0, p0=1.0)
PAR0 = PhysicalParams(b=1.0, tau=0.1, mu_drive=0.0, p0=1.0)


def flat_state(spec):
    return zero_potential(spec), indicator_from_graph(spec, np.zeros(spec.cell_shape[:-1]))


# --- zero-drive analytic saddle ------------------------------------------------

def test_zero_drive_run():
    spec = DomainSpec(2, (1.0,), (12,), 24)
    state = solve_saddle(spec, LIN, PAR0, SaddleOptions(tol_gap=1e-12, max_sweeps=5))
    assert state.converged
    assert state.sweeps <= 2
    assert np.abs(state.u).max() <= 1e-10
    assert np.array_equal(state.chi, flat_state(spec)[1])
    assert state.gap <= 1e-10
    assert state.gap_certified <= 1e-10
    assert state.lower == pytest.approx(-(-0.5 * PAR0.b + PAR0.p0 + PAR0.tau), abs=1e-12)


def test_zero_drive_is_fixed_point_of_one_sweep():
    spec = DomainSpec(2, (1.0,), (8,), 16)
    u0, chi0 = flat_state(spec)
    gain = gain_field(spec, LIN, PAR0, u0)
    rho_star, _ = maximize_gain(spec, gain, PAR0.tau, spec.omega_measure, tol=1e-10,
                                mode="relaxed")
    chi_star = binarize(spec, rho_star, spec.omega_measure)
    assert np.array_equal(chi_star, chi0)
    assert np.abs(rho_star - chi0).max() <= 1e-8


def test_zero_drive_probes_pass():
    spec = DomainSpec(2, (1.0,), (6,), 8)
    u0, chi0 = flat_state(spec)
    report = probe_saddle(spec, LIN, PAR0, u0, chi0, n_probes=20, tol=1e-9, seed=1)
    assert report.all_passed
    for check in report.checks:
        assert check.measured <= 1e-9


def test_probe_enumeration_on_tiny_grid():
    # every feasible binary layout is enumerated: an exact certificate of
    # the layout-side inequality
    spec = DomainSpec(2, (1.0,), (3,), 4)
    u0, chi0 = flat_state(spec)
    report = probe_saddle(spec, LIN, PAR0, u0, chi0, n_probes=5, tol=1e-11, seed=2)
    left = next(c for c in report.checks if c.name == "saddle_left_inequality")
    assert "924" in left.note
    assert left.passed


def test_probe_detects_wrong_layout():
    spec = DomainSpec(2, (1.0,), (3,), 4)
    u0 = zero_potential(spec)
    bad_chi = 1.0 - flat_state(spec)[1]  # fluid on top: maximally wrong
    report = probe_saddle(spec, LIN, PAR0, u0, bad_chi, n_probes=5, tol=1e-9, seed=3)
    left = next(c for c in report.checks if c.name == "saddle_left_inequality")
    assert not left.passed
    assert left.measured > 0.1


def test_scaled_probe_is_included():
    # the alpha = 1/C_M rescaling probe from the bound argument
    spec = DomainSpec(2, (1.0,), (4,), 6)
    state = solve_saddle(spec, LIN, PAR, SaddleOptions(tol_gap=1e-6, max_sweeps=20))
    report = probe_saddle(spec, LIN, PAR, state.u_maxmin, state.chi, n_probes=10,
                          tol=10 * max(state.gap, 1e-9), seed=4)
    right = next(c for c in report.checks if c.name == "saddle_right_inequality")
    assert right.passed


# --- bound histories -------------------------------------------------------------

def test_weak_duality_along_run():
    spec = DomainSpec(2, (1.0,), (16,), 32)
    opts = SaddleOptions(tol_gap=1e-3, max_sweeps=15, outer_tol=1e-6)
    state = solve_saddle(spec, LIN, PAR, opts)
    slack = 10 * (opts.inner_tol + opts.outer_tol)
    for h in state.history:
        assert h["lower"] <= h["upper"] + slack * (1 + abs(h["upper"]))
        assert h["lower_relaxed"] <= h["upper"] + slack * (1 + abs(h["upper"]))
    assert state.lower <= state.upper + slack
    assert state.lower <= state.lower_relaxed + slack


def test_iterate_value_between_bounds():
    spec = DomainSpec(2, (1.0,), (12,), 24)
    opts = SaddleOptions(tol_gap=1e-4, max_sweeps=20, outer_tol=1e-7)
    state = solve_saddle(spec, LIN, PAR, opts)
    val = saddle_objective(spec, LIN, PAR, state.u_maxmin, state.chi)
    tol = 10 * (opts.inner_tol + opts.outer_tol) * (1 + abs(state.upper))
    assert state.lower - tol <= val <= state.upper + tol


def test_state_upper_bounds_probe_values():
    # the certified upper bound dominates J(u_minmax, chi) for feasible chi
    spec = DomainSpec(2, (1.0,), (8,), 16)
    state = solve_saddle(spec, LIN, PAR, SaddleOptions(tol_gap=1e-4, max_sweeps=20))
    rng = np.random.default_rng(0)
    flat = flat_state(spec)[1]
    for _ in range(10):
        perm = rng.permutation(spec.n_cells)
        chi = flat.ravel()[perm].reshape(spec.cell_shape)
        assert saddle_objective(spec, LIN, PAR, state.u, chi) <= state.upper + 1e-7


# --- proposition-style checks ------------------------------------------------------

def test_norm_bound_arithmetic():
    spec = DomainSpec(2, (1.0,), (4,), 8)
    check = check_norm_bound(spec, PAR, zero_potential(spec))
    assert check.bound == pytest.approx(4 * math.sqrt(2.0))
    assert check.passed
    par_half = PhysicalParams(b=1.0, tau=0.1, mu_drive=4.0, p0=1.0)
    assert check_norm_bound(spec, par_half, zero_potential(spec)).bound == \
        pytest.approx(2 * check.bound)
    zero = check_norm_bound(spec, PAR0, zero_potential(spec))
    assert zero.bound == 0.0 and zero.passed


def test_bottom_distance_check():
    spec = DomainSpec(2, (1.0,), (4,), 8)
    chi = flat_state(spec)[1]
    check = check_bottom_distance(spec, LIN, PAR, chi)
    assert check.measured == 0.0 and check.passed
    assert check.bound == pytest.approx(PAR.mu_drive ** 2 / PAR.b * 0.5)
    lifted = np.roll(chi, 2, axis=-1)
    check2 = check_bottom_distance(spec, LIN, PAR, lifted)
    assert check2.measured == pytest.approx(2 * spec.spacings[-1])


def test_bubble_census():
    spec = DomainSpec(2, (1.0,), (4,), 8)
    chi = flat_state(spec)[1]
    assert bubble_census(spec, chi).measured == 0.0
    chi_bubble = chi.copy()
    chi_bubble[2, 1] = 0.0
    chi_bubble[2, 4] = 1.0
    assert bubble_census(spec, chi_bubble).measured == 1.0


# --- linear duality ---------------------------------------------------------------

def test_duality_degenerate_zero_drive():
    spec = DomainSpec(2, (1.0,), (6,), 8)
    chi = flat_state(spec)[1]
    report = check_linear_duality(spec, PAR0, 2.0, chi, tol=1e-12, inner_tol=1e-13)
    assert report.all_passed
    by_name = {c.name: c for c in report.checks}
    assert by_name["duality_extremality"].measured <= 1e-14
    assert by_name["dual_feasibility"].measured <= 1e-13


def test_duality_driven_8x8():
    spec = DomainSpec(2, (1.0,), (8,), 8)
    chi = indicator_from_graph(spec, np.zeros(8))
    report = check_linear_duality(spec, PAR, 2.0, chi, tol=1e-8, inner_tol=1e-12,
                                  n_probes=20, seed=5)
    assert report.all_passed, [c for c in report.checks if not c.passed]


def test_duality_random_layout():
    spec = DomainSpec(2, (1.0,), (6,), 8)
    rng = np.random.default_rng(9)
    chi = (rng.random(spec.cell_shape) < 0.5).astype(float)
    report = check_linear_duality(spec, PAR, 1.5, chi, tol=1e-8, inner_tol=1e-12)
    assert report.all_passed


def test_energy_minimality_zero_drive():
    spec = DomainSpec(2, (1.0,), (6,), 8)
    u0, chi0 = flat_state(spec)
    report = check_energy_minimality(spec, PAR0, 2.0, u0, chi0, tol=1e-9,
                                     n_probes=15, seed=6)
    assert report.all_passed


# --- free surface ------------------------------------------------------------------

def test_flat_residual_equals_minus_pressure():
    spec = DomainSpec(2, (1.0,), (8,), 16)
    u0, chi0 = flat_state(spec)
    eta = graph_from_indicator(spec, chi0)
    residual, norm = free_surface_residual(spec, LIN, PAR0, u0, eta)
    assert residual == pytest.approx(np.full(8, -PAR0.p0), abs=1e-13)
    assert norm == pytest.approx(PAR0.p0 * math.sqrt(spec.omega_measure), rel=1e-12)


def test_residual_requires_interior_interface():
    spec = DomainSpec(2, (1.0,), (4,), 8)
    chi = np.zeros(spec.cell_shape)
    chi[:, :] = 1.0  # full container: interface at the lid
    with pytest.raises(NotAGraphError):
        free_surface_residual(spec, LIN, PAR, zero_potential(spec),
                              graph_from_indicator(spec, chi))


def test_interface_jump_vanishes_for_smooth_potential():
    spec = DomainSpec(2, (1.0,), (8,), 16)
    X, Z = np.meshgrid(*spec.node_axes(), indexing="ij")
    u = np.sin(np.pi * X) * Z  # smooth, no kink at z=0
    u[lateral_node_mask(spec)] = 0.0
    eta = np.zeros(8)
    _, jump = interface_potential_jump(spec, u, eta)
    assert jump <= 1e-2  # second-order small for a kink-free field
    _, jump_fine = interface_potential_jump(
        DomainSpec(2, (1.0,), (16,), 32),
        np.sin(np.pi * np.meshgrid(*DomainSpec(2, (1.0,), (16,), 32).node_axes(),
                                   indexing="ij")[0])
        * np.meshgrid(*DomainSpec(2, (1.0,), (16,), 32).node_axes(), indexing="ij")[1],
        np.zeros(16))
    assert jump_fine <= 0.5 * jump


def test_nontriviality_checks():
    spec = DomainSpec(2, (1.0,), (8,), 16)
    chi = flat_state(spec)[1]
    driven = check_nontrivial_potential(spec, LIN, PAR, chi)
    assert driven.passed and driven.measured < 0
    vacuous = check_nontrivial_potential(spec, LIN, PAR0, chi)
    assert vacuous.passed and "vacuous" in vacuous.note
    # a unit-size probe need not lower the objective: quadratic term dominates
    axes = spec.node_axes()
    bump = np.sin(np.pi * axes[0])[:, None] * axes[1][None, :]
    j0 = saddle_objective(spec, LIN, PAR, zero_potential(spec), chi)
    j1 = saddle_objective(spec, LIN, PAR, 20.0 * bump, chi)
    assert j1 > j0


def test_driven_run_converges_and_reports():
    spec = DomainSpec(2, (1.0,), (16,), 32)
    opts = SaddleOptions(tol_gap=1e-3, max_sweeps=25, outer_tol=1e-6)
    state = solve_saddle(spec, LIN, PAR, opts)
    assert state.converged
    assert state.gap_certified <= 1e-3 * (1 + abs(state.upper))
    assert check_norm_bound(spec, PAR, state.u).passed
    assert check_bottom_distance(spec, LIN, PAR, state.chi).passed
    assert len(state.history) == state.sweeps
    # mixed pairing fields are consistent shapes
    assert state.u_maxmin.shape == spec.node_shape
    assert state.chi_minmax.shape == spec.cell_shape


def test_langevin_run_small():
    spec = DomainSpec(2, (1.0,), (8,), 16)
    law = MagnetizationLaw.langevin(1.0, 1.0)
    mu1 = float(1 / np.tanh(1.0))
    par = PhysicalParams(b=1.0, tau=0.1, mu_drive=mu1, p0=0.2104349)
    opts = SaddleOptions(tol_gap=5e-3, max_sweeps=25, outer_tol=1e-6, inner_tol=1e-9)
    state = solve_saddle(spec, law, par, opts)
    assert state.converged
    assert check_norm_bound(spec, par, state.u).passed
    assert check_bottom_distance(spec, law, par, state.chi).passed
