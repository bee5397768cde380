#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for rate fitting and theorem verdicts.
"""

import numpy as np
import pytest

from weak_confinement.errors import ConfigError, DomainError
from weak_confinement.rates import (
    DecaySeries,
    TheoremId,
    TheoremVerdict,
    default_window,
    exit_status,
    fit_decay_exponent,
    verdict_bundle,
    write_verdicts,
)
from weak_confinement.report_io import write_json


class TestDecaySeries:
    """Test validation of sampled series."""

    def test_times_must_increase(self):
        with pytest.raises(DomainError, match="strictly increasing"):
            DecaySeries(np.array([0.0, 2.0, 1.0]), np.ones(3), "l2")

    def test_values_must_be_finite(self):
        with pytest.raises(DomainError, match="non-finite"):
            DecaySeries(np.array([0.0, 1.0]), np.array([1.0, np.inf]), "l2")

    def test_scaled(self):
        series = DecaySeries(np.array([0.0, 1.0]), np.array([2.0, 4.0]), "mass")
        assert np.allclose(series.scaled(0.5).values, [1.0, 2.0])
        assert len(series) == 2


class TestFitDecayExponent:
    """Test the log-log least-squares fit."""

    def test_exact_power_law(self):
        t = np.geomspace(1.0, 1e4, 80)
        fit = fit_decay_exponent(DecaySeries(t, 3.0 * t ** -0.75, "l2"))
        assert fit.exponent == pytest.approx(-0.75, abs=1e-10)
        assert fit.residual < 1e-10
        assert np.allclose(fit.predict(t[-5:]), 3.0 * t[-5:] ** -0.75)

    def test_offset_and_scale(self):
        """The abscissa is offset + scale * t."""
        t = np.linspace(0.0, 500.0, 400)
        series = DecaySeries(t, (1 + 2 * t) ** -2.0, "chi2")
        fit = fit_decay_exponent(series, offset=1.0, scale=2.0)
        assert fit.exponent == pytest.approx(-2.0, abs=1e-10)

    def test_default_window(self):
        series = DecaySeries(np.linspace(0.0, 100.0, 11), np.ones(11))
        assert default_window(series) == (10.0, 95.0)

    def test_too_few_points(self):
        t = np.linspace(0.0, 100.0, 20)
        with pytest.raises(DomainError, match="at least 10 needed"):
            fit_decay_exponent(DecaySeries(t, 1 + t, "sparse"))

    def test_nonpositive_values_in_window(self):
        t = np.linspace(1.0, 100.0, 200)
        values = np.where(t > 50, -1.0, 1.0)
        with pytest.raises(DomainError, match="nonpositive"):
            fit_decay_exponent(DecaySeries(t, values, "signed"))

    def test_empty_window(self):
        t = np.linspace(1.0, 100.0, 200)
        with pytest.raises(DomainError, match="t_lo < t_hi"):
            fit_decay_exponent(DecaySeries(t, t), window=(50.0, 50.0))


class TestVerdicts:
    """Test quantitative and property verdicts and their bundles."""

    def test_quantitative_absolute(self):
        verdict = TheoremVerdict.quantitative(TheoremId.T2, -1.0, -1.2, 0.1)
        assert not verdict.passed
        assert verdict.tolerance == 0.1

    def test_quantitative_relative(self):
        verdict = TheoremVerdict.quantitative(TheoremId.SPECTRAL, 2.0, 2.03, 0.02, relative=True)
        assert verdict.passed
        assert verdict.tolerance == pytest.approx(0.04)

    def test_nan_never_passes(self):
        assert not TheoremVerdict.quantitative(TheoremId.T1, -1.5, float("nan"), 1e9).passed

    def test_property_suite(self):
        verdict = TheoremVerdict.property_suite(TheoremId.T4_PROPS, {"mass": True, "entropy": False})
        assert not verdict.passed
        assert verdict.expected == "all of: entropy, mass"
        assert not TheoremVerdict.property_suite(TheoremId.HN, {}).passed

    def test_negative_tolerance(self):
        with pytest.raises(DomainError, match="tolerance"):
            TheoremVerdict(TheoremId.T1, 1.0, 1.0, -0.1, True)

    def test_dict_round_trip(self):
        verdict = TheoremVerdict.quantitative("CKN", 0.5, 0.52, 0.1, config_hash="abc", description="slope")
        again = TheoremVerdict.from_dict(verdict.to_dict())
        assert again.theorem_id is TheoremId.CKN
        assert again.to_dict() == verdict.to_dict()

    def test_bundle_collects_nested_directories(self, tmp_path):
        write_verdicts([TheoremVerdict.quantitative("T1", -1.5, -1.5, 0.1)], tmp_path / "a")
        write_verdicts([TheoremVerdict.quantitative("T2", -1.0, -3.0, 0.1)], tmp_path / "b" / "c")
        bundle = verdict_bundle(tmp_path)
        assert [v.theorem_id for v in bundle] == [TheoremId.T1, TheoremId.T2]
        assert exit_status(bundle) == 1
        assert exit_status(bundle[:1]) == 0

    def test_empty_bundle_passes(self, tmp_path):
        bundle = verdict_bundle(tmp_path)
        assert bundle == []
        assert exit_status(bundle) == 0

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            verdict_bundle(tmp_path / "nowhere")

    def test_malformed_verdict_file(self, tmp_path):
        write_json([{"theorem_id": "T1"}], tmp_path / "verdicts.json")
        with pytest.raises(ConfigError, match="malformed"):
            verdict_bundle(tmp_path)
