#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the phase-space solver and the hypocoercivity functionals.
"""

import math

import numpy as np
import pytest

from weak_confinement.errors import DomainError, NumericalWarning
from weak_confinement.grids import PhaseField, PhaseGrid, phase_integral
from weak_confinement.kinetic import (
    FokkerPlanckCollision,
    KineticConfig,
    ScatteringCollision,
    apply_collision,
    discrete_maxwellian,
    elliptic_moment_recursion,
    epsilon_window,
    hypo_state,
    integrate_z_ode,
    lambda_epsilon,
    m_gamma,
    macro_pairing,
    microscopic_coercivity,
    nash_envelope,
    nash_envelope_inverse,
    operator_bound_suite,
    phase_operators,
    projection_pi,
    random_phase_field,
    read_snapshot,
    run_kinetic,
    smooth_initial_datum,
    transport_divergence,
    v_moment,
    weighted_moment,
    write_snapshot,
    x_moment,
)
from weak_confinement.potentials import PotentialKind, PotentialSpec
from weak_confinement.rates import fit_decay_exponent


@pytest.fixture(scope="module")
def grid():
    return PhaseGrid(x_max=30.0, v_max=8.0, nx=64, nv=32)


@pytest.fixture(scope="module")
def spec():
    return PotentialSpec(PotentialKind.V2, 1.0)


@pytest.fixture(scope="module")
def ops(grid, spec):
    return phase_operators(grid, spec)


class TestTransport:
    """Test the discrete transport operator."""

    @pytest.mark.parametrize("scheme", ["centered", "upwind", "minmod"])
    def test_equilibrium_is_steady(self, ops, scheme):
        residual = transport_divergence(ops.F, ops, scheme)
        assert np.max(np.abs(residual)) < 1e-12 * np.max(ops.F)

    @pytest.mark.parametrize("scheme", ["centered", "upwind", "minmod"])
    def test_conserves_mass(self, grid, ops, scheme):
        f = random_phase_field(grid, np.random.default_rng(1)).values
        divergence = PhaseField(grid, transport_divergence(f, ops, scheme))
        assert abs(phase_integral(divergence)) < 1e-10 * np.max(np.abs(f))

    def test_centered_is_skew_adjoint(self, grid, ops):
        rng = np.random.default_rng(2)
        f = random_phase_field(grid, rng).values
        h = random_phase_field(grid, rng).values
        tf = transport_divergence(f, ops)
        th = transport_divergence(h, ops)
        scale = math.sqrt(ops.norm_sq(tf) * ops.norm_sq(h))
        assert abs(ops.inner(tf, h) + ops.inner(f, th)) < 1e-10 * scale

    def test_unknown_scheme(self, ops):
        with pytest.raises(DomainError, match="unknown transport scheme"):
            transport_divergence(ops.F, ops, "lax_wendroff")

    def test_v1_is_rejected(self, grid):
        with pytest.raises(DomainError, match="V1"):
            phase_operators(grid, PotentialSpec(PotentialKind.V1, 1.0))


class TestCollisions:
    """Test the Fokker-Planck and scattering collision operators."""

    def test_maxwellian_normalization(self, grid):
        M, m2 = discrete_maxwellian(grid)
        assert float(np.sum(grid.wv * M)) == pytest.approx(1.0)
        assert m2 == pytest.approx(1.0, rel=1e-6)

    def test_fokker_planck_structure(self, grid):
        """M is in the kernel and L(v M) = -v M."""
        collision = FokkerPlanckCollision(grid)
        M, _ = discrete_maxwellian(grid)
        assert np.max(np.abs(collision.apply(M))) < 1e-12
        assert np.allclose(collision.apply(grid.v * M), -grid.v * M, atol=1e-12)

    @pytest.mark.parametrize("collision_class", [FokkerPlanckCollision, ScatteringCollision])
    def test_conserves_mass(self, grid, collision_class):
        collision = collision_class(grid)
        f = np.random.default_rng(4).random(grid.nv)
        lf = collision.apply(f)
        assert abs(float(np.sum(grid.wv * lf))) < 1e-10 * float(np.sum(grid.wv * np.abs(lf)))
        assert float(np.sum(grid.wv * collision.implicit_step(f, 0.5))) == pytest.approx(float(np.sum(grid.wv * f)))

    def test_fokker_planck_coercivity(self, grid):
        assert microscopic_coercivity(FokkerPlanckCollision(grid)) == pytest.approx(1.0, rel=1e-2)

    def test_scattering_coercivity(self, grid):
        """sigma >= 1 gives lambda_m >= 1."""
        assert microscopic_coercivity(ScatteringCollision(grid)) >= 1.0 - 1e-8

    def test_scattering_rate_below_one(self, grid):
        with pytest.raises(DomainError, match="sigma >= 1"):
            ScatteringCollision(grid, kernel=lambda v, w: 0.5 + 0 * v * w)

    def test_scattering_balance(self, grid):
        with pytest.raises(DomainError, match="balance"):
            ScatteringCollision(grid, kernel=lambda v, w: 1.0 + np.exp(v) + 0 * w)

    def test_projection_onto_local_equilibria(self, grid, ops):
        field = random_phase_field(grid, np.random.default_rng(11))
        pi_f = projection_pi(field, ops)
        assert np.allclose(projection_pi(pi_f, ops).values, pi_f.values, rtol=1e-12, atol=0)
        assert phase_integral(pi_f) == pytest.approx(phase_integral(field), abs=1e-12)

    def test_collision_annihilates_local_equilibria(self, grid, ops):
        collision = FokkerPlanckCollision(grid)
        pi_f = projection_pi(random_phase_field(grid, np.random.default_rng(12)), ops)
        assert np.max(np.abs(apply_collision(pi_f, collision).values)) < 1e-11 * np.max(np.abs(pi_f.values))

    def test_apply_collision_acts_on_every_row(self, grid):
        collision = ScatteringCollision(grid)
        field = smooth_initial_datum(grid)
        assert np.allclose(apply_collision(field, collision).values, collision.apply(field.values))


class TestHypocoercivity:
    """Test the twisted entropy and the operator estimates."""

    def test_equilibrium_has_no_dissipation(self, ops, grid):
        state = hypo_state(ops.F, ops, FokkerPlanckCollision(grid), 0.05)
        assert abs(state.D) < 1e-12 * state.norm_sq
        assert abs(state.micro) < 1e-20 * state.norm_sq + 1e-30
        assert state.H == pytest.approx(0.5 * state.norm_sq)

    def test_macro_pairing_margin(self, grid, ops):
        rng = np.random.default_rng(6)
        for _ in range(5):
            pair, margin = macro_pairing(random_phase_field(grid, rng), ops)
            assert pair >= -1e-12
            assert margin > 0

    @pytest.mark.parametrize("kind", ["fokker_planck", "scattering"])
    def test_resolvent_bounds_hold(self, grid, spec, kind):
        """Bounds that follow from w = (I + G)^{-1} u hold on every field."""
        collision = FokkerPlanckCollision(grid) if kind == "fokker_planck" else ScatteringCollision(grid)
        violations = operator_bound_suite(grid, spec, collision, 5, np.random.default_rng(7))
        for name in ("A", "TA", "TA_form", "ATPi", "ATPi_grad", "ATPi_laplace"):
            assert violations[name] == 0, name
        assert {"Hessian", "AT(1-Pi)", "AL"} <= set(violations)

    def test_fokker_planck_al_bound(self, grid, spec):
        """For Fokker-Planck, L(v M) = -v M makes the AL estimate exact."""
        violations = operator_bound_suite(grid, spec, FokkerPlanckCollision(grid), 5, np.random.default_rng(8))
        assert violations["AL"] == 0

    def test_epsilon_window(self):
        low, high = epsilon_window(1.0, m_gamma(1.0), 1 / math.sqrt(2))
        assert low == 0.0
        assert high == pytest.approx(0.2)
        assert lambda_epsilon(1.0, 0.5 * high, 3.0, 1 / math.sqrt(2)) > 0
        assert lambda_epsilon(1.0, 1.05 * high, 3.0, 1 / math.sqrt(2)) < 0


class TestRunKinetic:
    """Test a short kinetic run."""

    @pytest.fixture(scope="class")
    def trajectory(self, grid, spec):
        cfg = KineticConfig(spec, grid, dt=0.05, t_end=5.0, n_samples=20)
        return run_kinetic(smooth_initial_datum(grid), cfg)

    def test_initial_datum(self, grid):
        field = smooth_initial_datum(grid)
        assert np.all(field.values >= 0)
        with pytest.raises(DomainError, match="width"):
            smooth_initial_datum(grid, width=10.0)

    def test_mass_is_conserved(self, trajectory):
        mass = trajectory.series("mass").values
        assert np.allclose(mass, mass[0], rtol=1e-10)

    def test_norm_is_nonincreasing(self, trajectory):
        norm_sq = trajectory.series("norm_sq").values
        assert np.all(np.diff(norm_sq) <= 1e-12 * norm_sq[0])

    def test_positivity(self, trajectory):
        values = trajectory.final.values
        assert np.all(values >= -1e-12 * np.max(values))

    def test_moments(self, trajectory):
        assert not trajectory.halted
        assert trajectory.lambda_m == pytest.approx(1.0, rel=1e-2)
        assert trajectory.series("K2").values[-1] > 0

    def test_wall_monitor_halts(self, grid, spec):
        cfg = KineticConfig(spec, grid, dt=0.05, t_end=1.0, boundary_tolerance=1e-300)
        with pytest.warns(NumericalWarning, match="run halted"):
            traj = run_kinetic(smooth_initial_datum(grid), cfg)
        assert traj.halted
        assert len(traj.states) == 1

    def test_epsilon_outside_window(self, grid, spec):
        cfg = KineticConfig(spec, grid, dt=0.05, t_end=0.1, epsilon=0.5)
        with pytest.warns(NumericalWarning, match="positivity window"):
            run_kinetic(smooth_initial_datum(grid), cfg)

    def test_configured_coercivity(self, grid, spec, trajectory):
        """A configured lambda_m replaces the measured one in lambda_eps and the epsilon window."""
        cfg = KineticConfig(spec, grid, dt=0.05, t_end=0.1, lambda_m=0.1)
        with pytest.warns(NumericalWarning, match="positivity window"):
            traj = run_kinetic(smooth_initial_datum(grid), cfg)
        assert traj.lambda_m == 0.1
        expected = lambda_epsilon(0.1, cfg.epsilon, m_gamma(spec.gamma), traj.sigma_bar)
        assert traj.lambda_eps == pytest.approx(expected)
        assert traj.lambda_eps < 0 < trajectory.lambda_eps

    def test_config_validation(self, grid, spec):
        with pytest.raises(DomainError, match="epsilon"):
            KineticConfig(spec, grid, dt=0.05, t_end=1.0, epsilon=1.5)
        with pytest.raises(DomainError, match="t_end"):
            KineticConfig(spec, grid, dt=0.05, t_end=0.01)
        with pytest.raises(DomainError, match="lambda_m"):
            KineticConfig(spec, grid, dt=0.05, t_end=1.0, lambda_m=0.0)


class TestMoments:
    """Test moments, the moment recursion and snapshots."""

    def test_velocity_moment_of_local_equilibrium(self, ops, grid):
        field = PhaseField(grid, ops.F)
        mass = phase_integral(field)
        assert v_moment(field, 2.0) == pytest.approx(ops.m2 * mass)
        assert x_moment(field, 0.0) == pytest.approx(mass)

    def test_weighted_moment_of_density(self, grid):
        field = smooth_initial_datum(grid)
        rho = field.values @ grid.wv
        for ell in (0.0, 1.0, 2.5):
            assert weighted_moment(rho, grid, 0.0, ell) == pytest.approx(x_moment(field, ell), rel=1e-12)

    def test_recursion_needs_positive_indices(self):
        with pytest.raises(DomainError, match="M_2"):
            elliptic_moment_recursion(4, 3, 1.0, {0: 1.0}, 0.0)

    def test_nash_envelope_inverse(self):
        y = 3.7
        s = nash_envelope_inverse(y, 2.0, 1.5, 0.6)
        assert float(nash_envelope(s, 2.0, 1.5, 0.6)) == pytest.approx(y, rel=1e-12)
        assert nash_envelope_inverse(0.0, 2.0, 1.5, 0.6) == 0.0

    def test_snapshot_file(self, grid, tmp_path):
        field = smooth_initial_datum(grid)
        path = tmp_path / "snap" / "final.txt"
        write_snapshot(field, path)
        again = read_snapshot(path)
        assert again.grid.shape == grid.shape
        assert np.allclose(again.values, field.values, rtol=1e-15, atol=0)


class TestZOde:
    """Test the scalar decay ODE."""

    def test_tail_exponent(self):
        result = integrate_z_ode(3, 1.0, 3.0)
        fit = fit_decay_exponent(result.series(), window=(1e7, 1e9), offset=1.0)
        assert result.exponent_expected == -1.0
        assert fit.exponent == pytest.approx(-1.0, abs=0.1)

    def test_domain(self):
        with pytest.raises(DomainError, match="k must be"):
            integrate_z_ode(3, 1.0, 1.0)
