"""Objective evaluations versus independent summation oracles and identities."""

import math

import numpy as np
import pytest

from ferrosaddle.energies import (PhysicalParams, cyl_norm, drive_integral,
                                  dual_energy, dual_field_from_potential,
                                  field_energy, gain_field, graph_objective,
                                  gravity_perimeter_cost, saddle_objective,
                                  stored_energy, total_energy,
                                  weak_divergence_residual)
from ferrosaddle.grid import (DomainSpec, cell_gradient, indicator_from_graph,
                              lateral_node_mask, total_variation,
                              zero_potential)
from ferrosaddle.maglaw import MagnetizationLaw, coenergy

SPEC = DomainSpec(2, (1.0,), (3,), 4)
LIN = MagnetizationLaw.linear(2.0)
LANG = MagnetizationLaw.langevin(1.0, 1.0)
PAR = PhysicalParams(b=1.0, tau=0.1, mu_drive=2.0, p0=1.0)


def random_potential(spec, rng, scale=1.0):
    u = rng.standard_normal(spec.node_shape) * scale
    u[lateral_node_mask(spec)] = 0.0
    return u


def random_density(spec, rng):
    return rng.random(spec.cell_shape)


def objective_by_loops(spec, law, params, u, rho):
    """Independent nested-loop evaluation of the saddle objective."""
    hx, hz = spec.spacings
    meas = spec.cell_measure
    nx, nz = spec.cell_shape
    total = 0.0
    tv = 0.0
    for i in range(nx):
        for k in range(nz):
            gx = ((u[i + 1, k] - u[i, k]) + (u[i + 1, k + 1] - u[i, k + 1])) / (2 * hx)
            gz = ((u[i, k + 1] - u[i, k]) + (u[i + 1, k + 1] - u[i + 1, k])) / (2 * hz)
            s = math.hypot(gx, gz)
            zc = -1.0 + (k + 0.5) * hz
            total += meas * (rho[i, k] * coenergy(law, s)
                             + 0.5 * (1 - rho[i, k]) * s * s
                             - params.mu_drive * gz
                             - (params.b * zc + params.p0) * rho[i, k])
            dx = (rho[i + 1, k] - rho[i, k]) / hx if i + 1 < nx else 0.0
            dz = (rho[i, k + 1] - rho[i, k]) / hz if k + 1 < nz else 0.0
            tv += meas * math.hypot(dx, dz)
    return total - params.tau * tv


@pytest.mark.parametrize("law", [LIN, LANG])
def test_objective_matches_loop_oracle(law):
    rng = np.random.default_rng(0)
    u = random_potential(SPEC, rng)
    rho = random_density(SPEC, rng)
    assert saddle_objective(SPEC, law, PAR, u, rho) == pytest.approx(
        objective_by_loops(SPEC, law, PAR, u, rho), abs=1e-12)


def test_zero_potential_gives_minus_layout_cost():
    rng = np.random.default_rng(1)
    chi = indicator_from_graph(SPEC, rng.uniform(-0.5, 0.5, 3))
    u0 = zero_potential(SPEC)
    assert saddle_objective(SPEC, LIN, PAR, u0, chi) == pytest.approx(
        -gravity_perimeter_cost(SPEC, PAR, chi), abs=1e-14)


def test_split_identity():
    rng = np.random.default_rng(2)
    for law in (LIN, LANG):
        u = random_potential(SPEC, rng)
        rho = random_density(SPEC, rng)
        lhs = saddle_objective(SPEC, law, PAR, u, rho)
        rhs = (field_energy(SPEC, law, u, rho)
               - gravity_perimeter_cost(SPEC, PAR, rho)
               - PAR.mu_drive * drive_integral(SPEC, u))
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_layout_cost_values():
    chi = indicator_from_graph(SPEC, np.zeros(3))
    assert gravity_perimeter_cost(SPEC, PAR, chi) == pytest.approx(
        -0.5 * PAR.b + PAR.p0 + PAR.tau, abs=1e-13)
    assert gravity_perimeter_cost(SPEC, PAR, np.zeros(SPEC.cell_shape)) == 0.0


def test_layout_cost_lower_bound():
    rng = np.random.default_rng(3)
    for _ in range(20):
        chi = (rng.random(SPEC.cell_shape) < 0.5).astype(float)
        assert gravity_perimeter_cost(SPEC, PAR, chi) >= -0.5 * PAR.b * SPEC.omega_measure - 1e-12


def test_concavity_in_layout():
    rng = np.random.default_rng(4)
    u = random_potential(SPEC, rng)
    for _ in range(10):
        r1, r2 = random_density(SPEC, rng), random_density(SPEC, rng)
        t = rng.random()
        mixed = saddle_objective(SPEC, LANG, PAR, u, t * r1 + (1 - t) * r2)
        split = (t * saddle_objective(SPEC, LANG, PAR, u, r1)
                 + (1 - t) * saddle_objective(SPEC, LANG, PAR, u, r2))
        assert mixed >= split - 1e-12


def test_convexity_in_potential():
    rng = np.random.default_rng(5)
    rho = random_density(SPEC, rng)
    for law in (LIN, LANG):
        for _ in range(10):
            u1 = random_potential(SPEC, rng)
            u2 = random_potential(SPEC, rng)
            mid = saddle_objective(SPEC, law, PAR, 0.5 * (u1 + u2), rho)
            assert mid <= 0.5 * saddle_objective(SPEC, law, PAR, u1, rho) \
                + 0.5 * saddle_objective(SPEC, law, PAR, u2, rho) + 1e-12


def test_coercivity_chain():
    rng = np.random.default_rng(6)
    for _ in range(10):
        u = random_potential(SPEC, rng, scale=2.0)
        chi = (rng.random(SPEC.cell_shape) < 0.5).astype(float)
        norm = cyl_norm(SPEC, u)
        lower = (0.5 * norm ** 2
                 - PAR.mu_drive * math.sqrt(SPEC.domain_measure) * norm
                 - gravity_perimeter_cost(SPEC, PAR, chi))
        assert saddle_objective(SPEC, LANG, PAR, u, chi) >= lower - 1e-12


def test_drive_integral_equals_trace_form():
    rng = np.random.default_rng(7)
    u = random_potential(SPEC, rng)
    hx = SPEC.spacings[0]
    top = 0.5 * (u[:-1, -1] + u[1:, -1])
    bottom = 0.5 * (u[:-1, 0] + u[1:, 0])
    assert drive_integral(SPEC, u) == pytest.approx(float(((top - bottom) * hx).sum()),
                                                    abs=1e-13)


# --- gain field -----------------------------------------------------------------

def test_gain_at_zero_potential():
    gain = gain_field(SPEC, LIN, PAR, zero_potential(SPEC))
    assert gain == pytest.approx(-PAR.b * SPEC.cell_z() - PAR.p0, abs=1e-15)


def test_gain_linear_law_identity():
    rng = np.random.default_rng(8)
    u = random_potential(SPEC, rng)
    grad = cell_gradient(SPEC, u)
    s2 = np.sum(grad * grad, axis=-1)
    expected = 0.5 * (LIN.mu_const - 1.0) * s2 - PAR.b * SPEC.cell_z() - PAR.p0
    assert gain_field(SPEC, LIN, PAR, u) == pytest.approx(expected, abs=1e-13)


def test_gain_cellwise_lower_bound():
    rng = np.random.default_rng(9)
    for law in (LIN, LANG):
        u = random_potential(SPEC, rng)
        gain = gain_field(SPEC, law, PAR, u)
        assert np.all(gain + PAR.b * SPEC.cell_z() + PAR.p0 >= -1e-13)


def test_objective_decomposes_through_gain():
    rng = np.random.default_rng(10)
    u = random_potential(SPEC, rng)
    rho = random_density(SPEC, rng)
    gain = gain_field(SPEC, LANG, PAR, u)
    background = saddle_objective(SPEC, LANG, PAR, u, np.zeros(SPEC.cell_shape))
    expected = background + float((gain * rho).sum()) * SPEC.cell_measure \
        - PAR.tau * total_variation(SPEC, rho)
    assert saddle_objective(SPEC, LANG, PAR, u, rho) == pytest.approx(expected, abs=1e-12)


# --- graph form ------------------------------------------------------------------

def test_graph_objective_flat_zero_potential():
    val = graph_objective(SPEC, LIN, PAR, zero_potential(SPEC), np.zeros(3))
    assert val == pytest.approx(-PAR.tau * SPEC.omega_measure, abs=1e-14)


def test_graph_objective_linear_profile_by_loops():
    X, Z = np.meshgrid(*SPEC.node_axes(), indexing="ij")
    u = Z.copy()
    u[lateral_node_mask(SPEC)] = 0.0
    eta = np.zeros(3)
    got = graph_objective(SPEC, LIN, PAR, u, eta)

    # independent per-column split integration
    hx, hz = SPEC.spacings
    meas = SPEC.cell_measure
    total = 0.0
    for i in range(SPEC.cell_shape[0]):
        for k in range(SPEC.cell_shape[1]):
            gx = ((u[i + 1, k] - u[i, k]) + (u[i + 1, k + 1] - u[i, k + 1])) / (2 * hx)
            gz = ((u[i, k + 1] - u[i, k]) + (u[i + 1, k + 1] - u[i + 1, k])) / (2 * hz)
            s = math.hypot(gx, gz)
            z_lo = -1.0 + k * hz
            frac = min(max((eta[i] - z_lo) / hz, 0.0), 1.0)
            total += meas * (frac * coenergy(LIN, s) + (1 - frac) * 0.5 * s * s
                             - PAR.mu_drive * gz)
        total -= hx * (0.5 * PAR.b * eta[i] ** 2 + PAR.p0 * eta[i])
    slopes = np.zeros(3)
    slopes[:-1] = np.diff(eta) / hx
    total -= PAR.tau * float(np.sqrt(1 + slopes ** 2).sum()) * hx
    assert got == pytest.approx(total, abs=1e-12)


def test_graph_vs_cell_objective_constant_offset():
    # With the interface on a cell face and the pressure matched to gravity,
    # the graph and indicator forms differ by exactly -b|Omega|/2.
    spec = DomainSpec(2, (1.0,), (8,), 16)
    par = PhysicalParams(b=1.0, tau=0.1, mu_drive=2.0, p0=1.0)
    rng = np.random.default_rng(11)
    u = rng.standard_normal(spec.node_shape)
    u[lateral_node_mask(spec)] = 0.0
    eta = np.zeros(8)
    chi = indicator_from_graph(spec, eta)
    j = saddle_objective(spec, LIN, par, u, chi)
    f = graph_objective(spec, LIN, par, u, eta)
    # flat interface: no TV/area mismatch, no partial cells, z-midpoint sums
    # are exact, so the identity holds to roundoff
    assert j == pytest.approx(f - 0.5 * par.b * spec.omega_measure, abs=1e-12)


# --- linear-case energies ----------------------------------------------------------

def test_stored_energy_degenerate_cases():
    rng = np.random.default_rng(12)
    chi = indicator_from_graph(SPEC, np.zeros(3))
    u0 = zero_potential(SPEC)
    j2 = gravity_perimeter_cost(SPEC, PAR, chi)
    assert stored_energy(SPEC, PAR, 2.0, u0, chi) == pytest.approx(j2, abs=1e-14)
    pstar = np.zeros(SPEC.cell_shape + (2,))
    pstar[..., -1] = PAR.mu_drive
    assert dual_energy(SPEC, PAR, 2.0, pstar, chi) == pytest.approx(j2, abs=1e-14)


def test_primal_dual_energy_match_is_algebraic():
    # E(grad u) == dual energy of the induced flux for every potential,
    # not only the solved one.
    rng = np.random.default_rng(13)
    chi = (rng.random(SPEC.cell_shape) < 0.5).astype(float)
    for _ in range(5):
        u = random_potential(SPEC, rng)
        pstar = dual_field_from_potential(SPEC, PAR, 2.0, u, chi)
        e = stored_energy(SPEC, PAR, 2.0, u, chi)
        et = dual_energy(SPEC, PAR, 2.0, pstar, chi)
        assert e == pytest.approx(et, rel=1e-12, abs=1e-12)


def test_total_energy_relation_to_objective():
    rng = np.random.default_rng(14)
    chi = (rng.random(SPEC.cell_shape) < 0.5).astype(float)
    u = random_potential(SPEC, rng)
    j2 = gravity_perimeter_cost(SPEC, PAR, chi)
    lhs = total_energy(SPEC, PAR, 2.0, u, chi)
    rhs = saddle_objective(SPEC, LIN, PAR, u, chi) + 2.0 * j2
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_dual_field_degenerate_values():
    chi = indicator_from_graph(SPEC, np.zeros(3))
    pstar = dual_field_from_potential(SPEC, PAR, 2.0, zero_potential(SPEC), chi)
    assert np.abs(pstar[..., 0]).max() == 0.0
    assert pstar[..., 1] == pytest.approx(np.full(SPEC.cell_shape, PAR.mu_drive))
    par0 = PhysicalParams(b=1.0, tau=0.1, mu_drive=0.0, p0=1.0)
    p0 = dual_field_from_potential(SPEC, par0, 2.0, zero_potential(SPEC), chi)
    assert np.abs(p0).max() == 0.0
    assert dual_energy(SPEC, par0, 2.0, p0, chi) == pytest.approx(
        gravity_perimeter_cost(SPEC, par0, chi))


# --- weak divergence residual --------------------------------------------------------

def test_weak_divergence_zero_field():
    assert weak_divergence_residual(SPEC, np.zeros(SPEC.cell_shape + (2,))) == 0.0


def test_weak_divergence_constant_field_matches_loop_oracle():
    pstar = np.zeros(SPEC.cell_shape + (2,))
    pstar[..., 0] = 0.3
    pstar[..., 1] = 1.7
    got = weak_divergence_residual(SPEC, pstar)

    hx, hz = SPEC.spacings
    meas = SPEC.cell_measure
    nx, nz = SPEC.cell_shape
    loads = np.zeros((nx + 1, nz + 1))
    for i in range(nx):
        for k in range(nz):
            for (di, dk) in ((0, 0), (1, 0), (0, 1), (1, 1)):
                wx = (1.0 if di else -1.0) / (2 * hx)
                wz = (1.0 if dk else -1.0) / (2 * hz)
                loads[i + di, k + dk] += meas * (wx * pstar[i, k, 0] + wz * pstar[i, k, 1])
    loads[0, :] = loads[-1, :] = 0.0
    norm_p = math.sqrt(float(np.sum(pstar * pstar)) * meas)
    assert got == pytest.approx(np.linalg.norm(loads.ravel()) / norm_p, rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        PhysicalParams(b=0.0, tau=0.1, mu_drive=1.0, p0=1.0)
    with pytest.raises(ValueError):
        PhysicalParams(b=1.0, tau=-0.1, mu_drive=1.0, p0=1.0)
    with pytest.raises(ValueError):
        PhysicalParams(b=1.0, tau=0.1, mu_drive=-1.0, p0=1.0)
    PhysicalParams(b=1.0, tau=0.1, mu_drive=0.0, p0=1.0)
