#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for potentials, self-similar profiles and closed-form constants.
"""

import math

import numpy as np
import pytest

from weak_confinement.errors import DomainError
from weak_confinement.grids import geometric_radial_grid, radial_integral, RadialField
from weak_confinement.potentials import (
    PotentialKind,
    PotentialSpec,
    ProfileParams,
    SelfSimilarPotential,
    eval_potential,
    lambda_star,
    lambda_star_sectors,
    mass_matched_c_star,
    moment_bound_closed,
    mode_gap,
    schrodinger_psi,
    theorem1_rate_constant,
    theorem2_gronwall_bound,
    theorem2_rate_constant,
    theorem3_lp_bound,
    u_star,
    unif_max_bound,
    v_star,
    zeta_p,
)


class TestPotentialSpec:
    """Test the confinement potentials V1 and V2."""

    def test_none_forces_zero_gamma(self):
        spec = PotentialSpec(PotentialKind.NONE, 3.0)
        assert spec.gamma == 0.0
        assert np.all(spec.value(np.array([0.0, 5.0])) == 0.0)

    def test_kind_from_string(self):
        assert PotentialSpec("V2", 1.0).kind is PotentialKind.V2

    def test_v1_undefined_at_origin(self):
        with pytest.raises(DomainError, match="r = 0"):
            eval_potential(PotentialSpec(PotentialKind.V1, 1.0), 0.0)

    def test_v2_value(self):
        spec = PotentialSpec(PotentialKind.V2, 2.0)
        assert eval_potential(spec, 3.0) == pytest.approx(math.log(10.0))

    @pytest.mark.parametrize("kind", [PotentialKind.V1, PotentialKind.V2])
    def test_radial_derivative_matches_finite_difference(self, kind):
        spec = PotentialSpec(kind, 1.5)
        r, h = 1.7, 1e-6
        numeric = (spec.value(r + h) - spec.value(r - h)) / (2 * h)
        assert float(spec.radial_derivative(r)) == pytest.approx(float(numeric), rel=1e-7)

    def test_exp_value_of_v1_is_a_power(self):
        spec = PotentialSpec(PotentialKind.V1, 0.5)
        assert float(spec.exp_value(4.0)) == pytest.approx(2.0)

    def test_non_finite_gamma(self):
        with pytest.raises(DomainError, match="finite"):
            PotentialSpec(PotentialKind.V2, float("inf"))


class TestSelfSimilarPotential:
    """Test the rescaled drift potential Phi and psi."""

    def test_at_time(self):
        phi = SelfSimilarPotential.at_time(PotentialSpec(PotentialKind.V2, 1.0), 0.5)
        assert phi.sigma == pytest.approx(math.exp(-1.0))
        assert SelfSimilarPotential.at_time(PotentialSpec(PotentialKind.V1, 1.0), 3.0).sigma == 0.0

    def test_laplacian_matches_finite_difference(self):
        """The radial Laplacian is Phi'' + (d-1)/r Phi'."""
        phi = SelfSimilarPotential(1.5, 0.4)
        r, h, d = 1.3, 1e-4, 3
        second = (phi.value(r + h) - 2 * phi.value(r) + phi.value(r - h)) / h ** 2
        numeric = second + (d - 1) / r * phi.radial_derivative(r)
        assert float(phi.laplacian(r, d)) == pytest.approx(float(numeric), rel=1e-6)

    @pytest.mark.parametrize("gamma, sigma", [(0.0, 0.0), (1.0, 0.0), (2.5, 1.0), (-0.5, 0.3)])
    def test_psi_identity(self, gamma, sigma):
        """psi = |grad Phi|^2 / 4 - Delta Phi / 2."""
        phi = SelfSimilarPotential(gamma, sigma)
        r = np.linspace(0.2, 6.0, 30)
        expected = phi.radial_derivative(r) ** 2 / 4 - phi.laplacian(r, 3) / 2
        assert np.allclose(schrodinger_psi(gamma, sigma, r, d=3), expected, rtol=1e-12, atol=1e-12)

    def test_singular_at_origin(self):
        with pytest.raises(DomainError, match="singular"):
            SelfSimilarPotential(1.0, 0.0).value(np.array([0.0, 1.0]))

    def test_negative_sigma(self):
        with pytest.raises(DomainError, match="nonnegative"):
            SelfSimilarPotential(1.0, -0.1)


class TestProfiles:
    """Test u_star, v_star and mass matching."""

    def test_u_star_mass_is_conserved(self):
        """For sigma = 0 the mass of u_star is c_star |S^2| for all t."""
        grid = geometric_radial_grid(3, 40.0, 800)
        params = ProfileParams(1.0, 1.0, 3)
        for t in (0.0, 2.0):
            field = RadialField(grid, u_star(params, t, grid.nodes))
            assert radial_integral(field) == pytest.approx(4 * math.pi, rel=1e-3)

    def test_v_star_matches_u_star_at_time_zero(self):
        params = ProfileParams(2.0, 1.2, 3)
        xi = np.linspace(0.1, 5.0, 20)
        assert np.allclose(v_star(params, 0.0, xi), u_star(params, 0.0, xi))

    def test_mass_matched_c_star(self):
        grid = geometric_radial_grid(3, 30.0, 300)
        u0 = 2.0 * u_star(ProfileParams(1.0, 0.8, 3, 1.0), 0.0, grid.nodes)
        assert mass_matched_c_star(grid, u0, 0.8, 1.0) == pytest.approx(2.0, rel=1e-12)

    def test_profile_validation(self):
        with pytest.raises(DomainError, match="c_star"):
            ProfileParams(0.0, 1.0, 3)
        with pytest.raises(DomainError, match="sigma"):
            ProfileParams(1.0, 1.0, 3, 0.5)


class TestConstants:
    """Test closed-form gaps, rates and bounds."""

    def test_unif_max_bound_is_a_maximum(self):
        """For gamma < 0 it is the maximum of r^{-gamma} e^{-r^2/(4t)}."""
        r = np.linspace(1e-3, 20.0, 200001)
        dense_max = np.max(r ** 2 * np.exp(-(r ** 2) / 4.0))
        assert unif_max_bound(-2.0, 1.0) == pytest.approx(dense_max, rel=1e-6)

    def test_unif_max_bound_degenerate(self):
        with pytest.raises(DomainError, match="degenerate"):
            unif_max_bound(0.0, 1.0)

    @pytest.mark.parametrize(
        "d, gamma, expected",
        [(3, 0.5, 2.0), (3, 2.5, 2.0), (5, 4.5, 2.0), (6, 1.0, 4.0), (2, 1.5, 1.0), (1, 0.5, 2.0)],
    )
    def test_lambda_star(self, d, gamma, expected):
        assert lambda_star(d, gamma) == pytest.approx(expected)

    def test_lambda_star_range(self):
        with pytest.raises(DomainError, match="gamma"):
            lambda_star(3, 3.0)

    def test_mode_gap_solves_indicial_equation(self):
        d, gamma, k = 4, 1.3, 2
        a = mode_gap(d, gamma, k)
        assert a ** 2 + a * (d - 2 - gamma) - k * (k + d - 2) == pytest.approx(0.0, abs=1e-12)
        assert a > 0

    def test_sectors(self):
        sectors = lambda_star_sectors(3, 1.0)
        assert set(sectors) == {"radial", "mode_1", "mode_2", "formula"}
        assert sectors["radial"] == 2.0

    def test_zeta_p_at_infinity(self):
        assert zeta_p(3, 1.0, math.inf) == 1.5

    def test_lp_envelope(self):
        """p = 1 drops the profile factors; p = 2 keeps sqrt(c_star) (e/(2 gamma))^(gamma/4)."""
        assert theorem3_lp_bound(3, 1.0, 1.0, 2.0, 5.0, 0.5, 1.5) == pytest.approx(0.25)
        assert theorem3_lp_bound(3, 1.0, 2.0, 1.0, 4.0, 1.0, 0.0) == pytest.approx(2.0 * (math.e / 2.0) ** 0.25)
        ratio = theorem3_lp_bound(3, 1.0, 2.0, 1.0, 4.0, 1.0, 4.0) / theorem3_lp_bound(3, 1.0, 2.0, 1.0, 4.0, 1.0, 0.0)
        assert ratio == pytest.approx(9.0 ** -1.25)
        with pytest.raises(DomainError, match="gamma > 0"):
            theorem3_lp_bound(3, 0.0, 2.0, 1.0, 4.0, 1.0, 0.0)

    def test_theorem1_rate_constant_range(self):
        with pytest.raises(DomainError, match="gamma < "):
            theorem1_rate_constant(3, 0.5, 1.0, 1.0, 1.0)

    def test_gronwall_bound_tail_exponent(self):
        """The integrated bound decays like t^{-(d-gamma)/2}."""
        d, gamma, k = 3, 1.0, 2.0
        t = np.array([1e8, 1e9])
        z = theorem2_gronwall_bound(d, gamma, k, 1.0, 0.7, 1.3, t)
        slope = math.log(z[1] / z[0]) / math.log(10.0)
        assert slope == pytest.approx(-(d - gamma) / 2.0, abs=1e-2)
        assert float(theorem2_gronwall_bound(d, gamma, k, 2.5, 0.7, 1.3, 0.0)) == pytest.approx(2.5)

    @pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
    def test_rate_constant_dominates_gronwall_bound(self, a):
        d, gamma, k, b = 3, 1.0, 2.0, 1.3
        c = theorem2_rate_constant(d, gamma, k, a, b)
        t = np.geomspace(1e-3, 1e6, 60)
        bound = theorem2_gronwall_bound(d, gamma, k, 1.0, a, b, t)
        assert np.all(bound <= (1 + c * t) ** (-(d - gamma) / 2.0) * (1 + 1e-12))

    def test_moment_bound_needs_k_at_least_two(self):
        with pytest.raises(DomainError, match="at least"):
            moment_bound_closed(1.0, 3, 0.0, 1.0, 1.0, 1.0)
