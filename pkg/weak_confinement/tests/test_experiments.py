#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the experiment runners, sweeps and the command-line entry point.
"""

import json

import pytest

from confinement_lab import main
from weak_confinement.config import parse_config
from weak_confinement.errors import ConfigError, DomainError
from weak_confinement.experiments import MIN_OPERATOR_FIELDS, RUNNERS, operator_field_count, run_experiment, run_sweep
from weak_confinement.rates import TheoremVerdict, write_verdicts

HEAT = """\
[problem]
kind = none
d = 3

[grid]
n_radial = 120
r_max = 40

[time]
dt = 0.1
t_end = 10
sample_schedule = uniform
n_samples = 20

[fit]
window = 0, 10
"""


class TestRunExperiment:
    """Test runners on small problems."""

    def test_heat_run_writes_artifacts(self, tmp_path):
        cfg = parse_config(HEAT).with_output(str(tmp_path))
        assert run_experiment("macro-decay", cfg) == []
        for name in ("trajectory.csv", "fits.json", "verdicts.json", "manifest.json"):
            assert (tmp_path / name).exists()
        fits = json.loads((tmp_path / "fits.json").read_text())
        assert set(fits) == {"l2", "l2_weighted_eV"}
        assert fits["l2"]["exponent"] < 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["command"] == "macro-decay"
        assert manifest["config"]["problem"]["kind"] == "none"

    def test_formats_select_artifacts(self, tmp_path):
        cfg = parse_config(HEAT, ["output.formats=json"]).with_output(str(tmp_path))
        run_experiment("macro-decay", cfg)
        assert not (tmp_path / "trajectory.csv").exists()
        assert (tmp_path / "fits.json").exists()

    def test_spectrum_gap(self, tmp_path):
        text = "[problem]\nkind = V2\nd = 3\ngamma = 1\n[grid]\nn_radial = 400\nr_max = 12\n"
        verdicts = run_experiment("spectrum", parse_config(text).with_output(str(tmp_path)))
        assert len(verdicts) == 1
        assert verdicts[0].passed
        assert verdicts[0].expected == 2.0
        assert (tmp_path / "spectrum.csv").exists()

    def test_missing_section(self, tmp_path):
        cfg = parse_config("[problem]\n").with_output(str(tmp_path))
        with pytest.raises(ConfigError, match="\\[grid\\], \\[time\\]"):
            run_experiment("macro-decay", cfg)

    def test_theorem1_range(self, tmp_path):
        cfg = parse_config(HEAT, ["problem.kind=V2", "problem.gamma=1", "problem.theorem=T1"])
        with pytest.raises(DomainError, match="requires gamma"):
            run_experiment("macro-decay", cfg.with_output(str(tmp_path)))

    def test_kinetic_is_one_dimensional(self, tmp_path):
        cfg = parse_config(HEAT, ["hypo.epsilon=0.05"]).with_output(str(tmp_path))
        with pytest.raises(DomainError, match="set d = 1"):
            run_experiment("kinetic", cfg)

    @pytest.mark.parametrize("n_random, expected", [(10, MIN_OPERATOR_FIELDS), (200, 200), (500, 500)])
    def test_operator_field_count(self, n_random, expected):
        """Operator estimates never run on fewer than MIN_OPERATOR_FIELDS random fields."""
        cfg = parse_config(HEAT, [f"fit.n_random={n_random}"])
        assert operator_field_count(cfg) == expected

    def test_inequalities_need_three_dimensions(self, tmp_path):
        cfg = parse_config("[problem]\nd = 2\n").with_output(str(tmp_path))
        with pytest.raises(DomainError, match="d >= 3"):
            run_experiment("inequalities", cfg)

    def test_unknown_command(self, tmp_path):
        with pytest.raises(DomainError, match="unknown experiment"):
            run_experiment("weather", parse_config("").with_output(str(tmp_path)))

    def test_explicit_bound_reports_both_nash_constants(self, tmp_path):
        cfg = parse_config(HEAT, ["problem.theorem=T1"]).with_output(str(tmp_path))
        verdicts = run_experiment("macro-decay", cfg)
        assert len(verdicts) == 2
        bound = verdicts[1]
        assert set(bound.checks) == {"explicit_bound"}
        assert "sharp Nash c=" in bound.description
        assert "Nash envelope c=" in bound.description

    def test_report_collects_bundle(self, tmp_path):
        verdict = TheoremVerdict.quantitative("T2", -1.0, -0.98, 0.1, "abc", "exponent")
        write_verdicts([verdict], tmp_path / "run")
        bundle = run_experiment("report", parse_config("").with_output(str(tmp_path)))
        assert [v.theorem_id.value for v in bundle] == ["T2"]
        assert json.loads((tmp_path / "report.json").read_text())[0]["passed"]


class TestSweep:
    """Test sweeps over a configuration product."""

    def test_entries_run_in_hashed_directories(self, tmp_path):
        cfg = parse_config(HEAT + "[sweep]\ntime.dt = 0.1, 0.2\n").with_output(str(tmp_path))
        assert run_sweep("macro-decay", cfg, processes=1) == []
        manifests = sorted(tmp_path.glob("*/manifest.json"))
        assert len(manifests) == 2
        dts = {json.loads(p.read_text())["config"]["time"]["dt"] for p in manifests}
        assert dts == {0.1, 0.2}

    def test_report_cannot_be_swept(self, tmp_path):
        with pytest.raises(DomainError, match="cannot sweep"):
            run_sweep("report", parse_config("").with_output(str(tmp_path)))


class TestCommandLine:
    """Test the exit codes of the command-line entry point."""

    def test_subcommands(self):
        assert set(RUNNERS) == {"macro-decay", "self-similar", "spectrum", "kinetic", "inequalities", "report"}

    def test_missing_subcommand(self):
        assert main([]) == 2

    def test_config_required(self, tmp_path):
        assert main(["spectrum", "--out", str(tmp_path)]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["macro-decay", "--config", str(tmp_path / "absent.ini")]) == 2

    def test_run_with_overrides(self, tmp_path):
        path = tmp_path / "heat.ini"
        path.write_text(HEAT)
        out = tmp_path / "out"
        assert main(["macro-decay", "--config", str(path), "--set", "time.t_end=5", "--out", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["time"]["t_end"] == 5.0

    def test_report_on_empty_directory(self, tmp_path):
        assert main(["report", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "report.json").read_text()) == []

    def test_failed_verdict_exit_status(self, tmp_path):
        verdict = TheoremVerdict.quantitative("T2", -1.0, -0.5, 0.1, "abc", "exponent")
        write_verdicts([verdict], tmp_path)
        assert main(["report", "--out", str(tmp_path)]) == 1
