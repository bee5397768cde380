#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for INI configuration parsing, overrides and sweeps.
"""

import re
from pathlib import Path

import pytest

from weak_confinement.config import (
    ExperimentConfig,
    expand_sweep,
    load_config,
    parse_config,
    save_config,
)
from weak_confinement.errors import ConfigError

FULL = """\
[problem]
kind = V1
d = 4
gamma = 1.5
theorem = T3
frame = self_similar

[grid]
n_radial = 128
r_max = 30

[time]
dt = 0.1
t_end = 20
sample_schedule = uniform

[hypo]
epsilon = 0.1
lambda_m = auto

[fit]
window = 2, 18
tolerance = 0.2

[output]
directory = out/full
formats = csv, snapshot

[sweep]
problem.gamma = 0.5, 1.5
"""


class TestParseConfig:
    """Test parsing of sections, values and line-numbered errors."""

    def test_full_document(self):
        cfg = parse_config(FULL)
        assert cfg.problem.kind == "V1"
        assert cfg.problem.d == 4
        assert cfg.problem.frame == "self_similar"
        assert cfg.grid.n_radial == 128
        assert cfg.grid.r_max == 30.0
        assert cfg.time.sample_schedule == "uniform"
        assert cfg.hypo.lambda_m is None
        assert cfg.fit.window == (2.0, 18.0)
        assert cfg.output.formats == ("csv", "snapshot")
        assert cfg.sweep == {"problem.gamma": ("0.5", "1.5")}
        assert cfg.present == {"problem", "grid", "time", "hypo", "fit", "output", "sweep"}

    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig()
        assert cfg.present == frozenset()

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError, match="line 5: unknown key 'n_cells' in \\[grid\\]") as info:
            parse_config("[problem]\nd = 3\n\n[grid]\nn_cells = 4\n")
        assert info.value.line == 5

    def test_unknown_section_reports_line(self):
        with pytest.raises(ConfigError, match="line 2: unknown section \\[extras\\]"):
            parse_config("[problem]\n[extras]\nx = 1\n")

    def test_unparsable_value(self):
        with pytest.raises(ConfigError, match="line 2: \\[grid\\] n_radial: cannot parse"):
            parse_config("[grid]\nn_radial = many\n")

    def test_duplicate_section(self):
        with pytest.raises(ConfigError, match="line 2: cannot parse"):
            parse_config("[problem]\n[problem]\n")

    @pytest.mark.parametrize(
        "text, message",
        [
            ("[problem]\nkind = V3\n", "kind must be one of"),
            ("[problem]\ntheorem = T9\n", "theorem must be one of"),
            ("[grid]\nr_max = 0.5\n", "r_inner < 1 < r_max"),
            ("[time]\ndt = -1\n", "dt must be positive"),
            ("[time]\nsample_schedule = log\n", "sample_schedule must be"),
            ("[hypo]\nepsilon = 1.5\n", "epsilon must lie in"),
            ("[hypo]\nk_moment = 1\n", "k_moment must be at least 2"),
            ("[fit]\nwindow = 5, 2\n", "window must satisfy"),
            ("[output]\nformats = csv, xml\n", "formats must be drawn"),
        ],
    )
    def test_validation(self, text, message):
        with pytest.raises(ConfigError, match=message) as info:
            parse_config(text)
        assert info.value.line == 1

    def test_require(self):
        cfg = parse_config("[problem]\n")
        cfg.require("problem")
        with pytest.raises(ConfigError, match="missing required section\\(s\\): \\[grid\\], \\[time\\]"):
            cfg.require("problem", "grid", "time")


class TestOverrides:
    """Test command-line style overrides."""

    def test_overrides_replace_and_add(self):
        cfg = parse_config("[problem]\nd = 3\n", ["problem.gamma=0.7", "grid.n_radial = 64"])
        assert cfg.problem.gamma == 0.7
        assert cfg.grid.n_radial == 64
        assert "grid" in cfg.present

    def test_overrides_are_validated(self):
        with pytest.raises(ConfigError, match="kind must be one of"):
            parse_config("[problem]\n", ["problem.kind=V7"])

    def test_malformed_override(self):
        with pytest.raises(ConfigError, match="section.key=value"):
            parse_config("", ["gamma=1"])

    def test_with_output(self):
        cfg = parse_config(FULL).with_output("elsewhere")
        assert cfg.output.directory == "elsewhere"
        assert cfg.output.formats == ("csv", "snapshot")


class TestFiles:
    """Test loading and saving INI files."""

    def test_round_trip(self, tmp_path):
        cfg = parse_config(FULL)
        path = tmp_path / "nested" / "full.ini"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_only_present_sections_are_saved(self, tmp_path):
        path = tmp_path / "small.ini"
        save_config(parse_config("[problem]\nd = 5\n"), path)
        text = path.read_text()
        assert "[problem]" in text
        assert "[grid]" not in text

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.ini")

    def test_load_applies_overrides(self, tmp_path):
        path = tmp_path / "t.ini"
        path.write_text("[problem]\nd = 3\n")
        assert load_config(path, ["problem.d=5"]).problem.d == 5


class TestSweep:
    """Test expansion of the [sweep] product."""

    def test_product(self):
        cfg = parse_config("[problem]\nd = 3\n[sweep]\nproblem.gamma = 0, 1\ntime.dt = 0.1, 0.2, 0.4\n")
        entries = expand_sweep(cfg)
        assert len(entries) == 6
        assert {(e.problem.gamma, e.time.dt) for e in entries} == {
            (g, dt) for g in (0.0, 1.0) for dt in (0.1, 0.2, 0.4)
        }
        assert all(e.sweep == {} and "sweep" not in e.present and "time" in e.present for e in entries)
        assert all(e.problem.d == 3 for e in entries)

    def test_no_sweep(self):
        cfg = parse_config("[problem]\n")
        assert expand_sweep(cfg) == [cfg]

    def test_entry_without_section(self):
        with pytest.raises(ConfigError, match="line 2: sweep entries"):
            parse_config("[sweep]\ngamma = 1, 2\n")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section \\[extras\\]"):
            expand_sweep(parse_config("[sweep]\nextras.x = 1\n"))

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key 'colour'"):
            expand_sweep(parse_config("[sweep]\nproblem.colour = red\n"))

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="sweep value 'many'"):
            expand_sweep(parse_config("[sweep]\ngrid.nx = many\n"))


ROOT = Path(__file__).resolve().parents[2]


class TestReferenceConfigs:
    """Test the configurations shipped in configs/ and run by run_all.sh."""

    @pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.ini")), ids=lambda p: p.name)
    def test_loads(self, path):
        assert load_config(path).problem is not None

    def test_uniform_bound_covers_both_profiles(self):
        """The supersolution bound runs for V1 (sigma = 0) and V2 (sigma = 1)."""
        script = (ROOT / "run_all.sh").read_text()
        kinds = set()
        for config in re.findall(r"^run self-similar (\S+)$", script, flags=re.MULTILINE):
            problem = load_config(ROOT / config).problem
            if problem.theorem == "Uniform":
                kinds.add(problem.kind)
        assert kinds == {"V1", "V2"}
