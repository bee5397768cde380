#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for trial-function quadrature and the Nash, Hardy, Hardy-Nash and CKN
estimators.
"""

import math

import numpy as np
import pytest

from weak_confinement.errors import DomainError
from weak_confinement.grids import RadialField, geometric_radial_grid
from weak_confinement.inequalities import (
    EnvelopeDirection,
    InequalityEstimate,
    InequalityName,
    RadialTrial,
    beta_from_delta,
    ckn_beta_bridge,
    ckn_exponent,
    ckn_inhom_check,
    ckn_quotient_hom,
    delta_from_beta,
    estimate_ckn_hom,
    estimate_nash_constant,
    gauss_poly_family,
    hardy_nash2_check,
    hardy_nash2_constant,
    hardy_nash_bracket,
    hardy_nash_constant,
    hardy_nash_witness,
    hardy_rayleigh,
    hardy_threshold,
    inhom_shift_scan,
    nash_quotient,
    sharp_nash_constant,
    translation_degeneracy,
    trial_integral,
    verify_hardy_nash,
)

GAUSSIAN = RadialTrial(s=0.5, label="gaussian")


class TestTrialIntegral:
    """Test quadrature of trial functions against closed forms."""

    def test_gaussian_integrals(self):
        root = math.pi ** 1.5
        assert trial_integral(GAUSSIAN, 3, "square") == pytest.approx(root, rel=1e-9)
        assert trial_integral(GAUSSIAN, 3, "abs") == pytest.approx((2 * math.pi) ** 1.5, rel=1e-9)
        assert trial_integral(GAUSSIAN, 3, "gradient") == pytest.approx(1.5 * root, rel=1e-9)

    def test_singular_weight(self):
        """int e^{-|x|^2} / |x|^2 over R^3 is 2 pi^{3/2}."""
        value = trial_integral(GAUSSIAN, 3, "square", weight_power=-2.0)
        assert value == pytest.approx(2 * math.pi ** 1.5, rel=1e-9)

    def test_compact_support(self):
        """(1 - r^2)_+ in R^1: int u^2 = 16/15."""
        bump = RadialTrial(bump_radius=1.0, bump_power=1.0)
        assert trial_integral(bump, 1, "square") == pytest.approx(16 / 15, rel=1e-9)

    def test_divergence_at_origin(self):
        with pytest.raises(DomainError, match="diverges"):
            trial_integral(RadialTrial(power=-1.5, s=1.0), 3, "square")

    def test_trial_validation(self):
        with pytest.raises(DomainError, match="q must be"):
            RadialTrial(q=0.5)
        with pytest.raises(DomainError, match="bump_power"):
            RadialTrial(bump_radius=1.0, bump_power=0.5)
        with pytest.raises(DomainError, match="dilated"):
            RadialTrial(bracket_power=1.0).dilated(2.0)

    def test_family_unit_box(self):
        family = gauss_poly_family()
        params = family.from_unit(family.to_unit(family.start))
        for name, value in family.start.items():
            assert params[name] == pytest.approx(value)


class TestNash:
    """Test the Nash quotient and constants."""

    def test_gaussian_quotient(self):
        assert nash_quotient(GAUSSIAN, d=3) == pytest.approx(1 / (6 * math.pi), rel=1e-9)

    def test_dilation_invariance(self):
        trial = RadialTrial(c1=0.7, s=0.8, q=1.5)
        assert nash_quotient(trial.dilated(3.0), d=3) == pytest.approx(nash_quotient(trial, d=3), rel=1e-8)

    def test_grid_quotient(self):
        grid = geometric_radial_grid(3, 12.0, 800)
        field = RadialField.from_function(grid, lambda r: np.exp(-0.5 * r ** 2))
        assert nash_quotient(field) == pytest.approx(1 / (6 * math.pi), rel=2e-2)

    def test_needs_dimension(self):
        with pytest.raises(DomainError, match="d is required"):
            nash_quotient(GAUSSIAN)

    def test_estimate_lies_below_sharp_constant(self):
        estimate = estimate_nash_constant(3)
        assert estimate.direction is EnvelopeDirection.LOWER
        assert 1 / (6 * math.pi) <= estimate.constant <= sharp_nash_constant(3) * (1 + 1e-9)
        assert estimate.iterations > 0


class TestHardy:
    """Test Hardy and Hardy-Nash inequalities."""

    def test_rayleigh_quotient_approaches_threshold(self):
        estimate = hardy_rayleigh(3)
        assert estimate.direction is EnvelopeDirection.UPPER
        assert hardy_threshold(3) - 1e-9 <= estimate.constant <= 1.05 * hardy_threshold(3)

    def test_hardy_needs_three_dimensions(self):
        with pytest.raises(DomainError, match="d >= 3"):
            hardy_rayleigh(2)

    def test_constants(self):
        assert hardy_nash_constant(3, 0.125) == pytest.approx(2 * sharp_nash_constant(3))
        assert hardy_nash2_constant(3, 0.0, 0.625) == pytest.approx(2 * sharp_nash_constant(3))
        with pytest.raises(DomainError, match="delta must be below"):
            hardy_nash_constant(3, 0.25)
        with pytest.raises(DomainError, match="eta must be below"):
            hardy_nash2_constant(3, 0.0, 1.25)

    def test_homogeneous_inequality_holds(self):
        estimate = verify_hardy_nash(3, 0.2, 12, np.random.default_rng(11))
        assert estimate.name is InequalityName.HARDY_NASH
        assert estimate.worst_margin >= -1e-9
        assert estimate.trials == 12

    def test_inhomogeneous_inequality_holds(self):
        report = hardy_nash2_check(3, 0.2, 1.0, 12, np.random.default_rng(12))
        assert report["holds"]
        assert report["inhom_hardy_nonnegative"]
        assert report["estimate"].name is InequalityName.HARDY_NASH2

    @pytest.mark.parametrize("eta", [None, 0.0])
    def test_witness_above_threshold(self, eta):
        trial, bracket = hardy_nash_witness(3, hardy_threshold(3) + 0.1, eta)
        assert bracket < 0
        assert hardy_nash_bracket(trial, 3, hardy_threshold(3) + 0.1, eta) == pytest.approx(bracket)

    def test_no_witness_below_threshold(self):
        with pytest.raises(DomainError, match="witness exists only"):
            hardy_nash_witness(3, 0.2)


class TestCKN:
    """Test the CKN inequalities of Nash type."""

    def test_exponent_domain(self):
        with pytest.raises(DomainError, match="gamma must be below"):
            ckn_exponent(3, 3.0, 2.0)
        with pytest.raises(DomainError, match="k must be at least"):
            ckn_exponent(3, 2.0, 0.5)

    def test_homogeneous_quotient_is_invariant(self):
        """Dilations leave the homogeneous quotient unchanged."""
        trial = RadialTrial(c1=0.3, s=1.2, q=2.0)
        base = ckn_quotient_hom(trial, 3, 1.0, 1.0)
        assert ckn_quotient_hom(trial.dilated(4.0), 3, 1.0, 1.0) == pytest.approx(base, rel=1e-8)

    def test_homogeneous_envelope(self):
        estimate = estimate_ckn_hom(3, 1.0, 2.0)
        assert estimate.name is InequalityName.CKN_HOM
        assert estimate.direction is EnvelopeDirection.LOWER
        assert estimate.constant >= ckn_quotient_hom(GAUSSIAN, 3, 1.0, 2.0) * (1 - 1e-9)

    def test_grid_and_trial_agree(self):
        grid = geometric_radial_grid(3, 12.0, 800)
        field = RadialField.from_function(grid, GAUSSIAN)
        assert ckn_quotient_hom(field, 3, 1.0, 1.0) == pytest.approx(ckn_quotient_hom(GAUSSIAN, 3, 1.0, 1.0), rel=2e-2)

    def test_translation_degeneracy(self):
        slope, quotients = translation_degeneracy(3, 1.0)
        assert slope == pytest.approx(-0.5, abs=0.05)
        assert np.all(np.diff(quotients) < 0)

    def test_inhomogeneous_shift_floor(self):
        values = inhom_shift_scan(3, 1.0, 1.0, np.linspace(0.0, 10.0, 11))
        assert np.min(values) >= 0.5 * values[0]

    def test_inhomogeneous_envelope(self):
        estimate = ckn_inhom_check(3, 1.0, 1.0, 10, np.random.default_rng(13), n_calibration=10)
        assert estimate.name is InequalityName.CKN_INHOM
        assert estimate.direction is EnvelopeDirection.LOWER
        assert estimate.worst_margin >= 0

    def test_beta_delta_round_trip(self):
        assert beta_from_delta(3, 0.1875) == -0.5
        assert delta_from_beta(3, -0.5) == 0.1875

    def test_beta_bridge(self):
        beta, report = ckn_beta_bridge(3, 0.1875, n_trials=6)
        assert beta == -0.5
        assert report["delta_round_trip"] == pytest.approx(0.1875)
        assert report["max_relative_difference"] < 1e-6


class TestInequalityEstimate:
    """Test the estimate record."""

    def test_to_dict(self):
        estimate = InequalityEstimate("Nash", {"d": 3}, 0.05, "LowerEnvelope", "bump", 40, "bump(p=2)")
        document = estimate.to_dict()
        assert document["name"] == "Nash"
        assert document["direction"] == "LowerEnvelope"
        assert document["optimizer"] == {"family": "bump", "iterations": 40, "best": "bump(p=2)"}

    def test_constant_must_be_positive(self):
        with pytest.raises(DomainError, match="positive"):
            InequalityEstimate("Hardy", {"d": 3}, 0.0, "UpperEnvelope")
