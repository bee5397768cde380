#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Configuration management for verification experiments.

An experiment is described by an INI file with the sections ``[problem]``,
``[grid]``, ``[time]``, ``[hypo]``, ``[fit]``, ``[output]`` and optionally
``[sweep]``. Every section maps to a validated dataclass; all keys are
optional, but a subcommand may require a section to be present.

Example configuration file::

    [problem]
    kind = V2
    d = 3
    gamma = 1.0
    theorem = T2

    [grid]
    n_radial = 400
    r_max = 80

    [time]
    dt = 0.05
    t_end = 90

    [output]
    directory = out/theorem2
"""

import configparser
import copy
import itertools
import logging
import re
import typing
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from weak_confinement.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240601

_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_LINE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


@dataclass(frozen=True)
class ProblemSection:
    """
    Attributes
    ----------
    kind : str
        Confinement potential: none, V1 or V2.
    d : int
        Space dimension.
    gamma : float
        Strength of the potential.
    sigma : float
        Regularization of the self-similar potential (spectrum runs).
    mode_k : int
        Spherical-harmonic index.
    theorem : str
        Claim checked by the run: T1, T2, T3, Uniform or none.
    collision : str
        Kinetic collision operator: fokker_planck or scattering.
    seed : int
        Seed of every random trial family.
    frame : str
        original or self_similar.
    """

    kind: str = "V2"
    d: int = 3
    gamma: float = 0.0
    sigma: float = 0.0
    mode_k: int = 0
    theorem: str = "none"
    collision: str = "fokker_planck"
    seed: int = DEFAULT_SEED
    frame: str = "original"

    def __post_init__(self):
        if self.kind not in ("none", "V1", "V2"):
            raise ConfigError(f"kind must be one of none, V1, V2, got {self.kind!r}")
        if self.d < 1:
            raise ConfigError(f"d must be at least 1, got {self.d}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be nonnegative, got {self.sigma}")
        if self.mode_k < 0:
            raise ConfigError(f"mode_k must be nonnegative, got {self.mode_k}")
        if self.theorem not in ("T1", "T2", "T3", "Uniform", "none"):
            raise ConfigError(f"theorem must be one of T1, T2, T3, Uniform, none, got {self.theorem!r}")
        if self.collision not in ("fokker_planck", "scattering"):
            raise ConfigError(f"collision must be fokker_planck or scattering, got {self.collision!r}")
        if self.frame not in ("original", "self_similar"):
            raise ConfigError(f"frame must be original or self_similar, got {self.frame!r}")


@dataclass(frozen=True)
class GridSection:
    n_radial: int = 400
    r_max: float = 60.0
    r_inner: float = 1e-4
    nx: int = 128
    nv: int = 64
    x_max: float = 40.0
    v_max: float = 8.0

    def __post_init__(self):
        if self.n_radial < 8:
            raise ConfigError(f"n_radial must be at least 8, got {self.n_radial}")
        if not 0 < self.r_inner < 1 < self.r_max:
            raise ConfigError(f"need 0 < r_inner < 1 < r_max, got r_inner={self.r_inner}, r_max={self.r_max}")
        if self.nx < 8 or self.nv < 8:
            raise ConfigError(f"nx and nv must be at least 8, got {self.nx}, {self.nv}")
        if self.x_max <= 0:
            raise ConfigError(f"x_max must be positive, got {self.x_max}")
        if self.v_max < 6:
            raise ConfigError(f"v_max must be at least 6, got {self.v_max}")


@dataclass(frozen=True)
class TimeSection:
    dt: float = 0.05
    t_end: float = 50.0
    sample_schedule: str = "geometric"
    n_samples: int = 60
    scheme: str = "backward_euler"

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise ConfigError(f"t_end must be at least dt, got {self.t_end}")
        if self.sample_schedule not in ("geometric", "uniform"):
            raise ConfigError(f"sample_schedule must be geometric or uniform, got {self.sample_schedule!r}")
        if self.n_samples < 2:
            raise ConfigError(f"n_samples must be at least 2, got {self.n_samples}")
        if self.scheme not in ("backward_euler", "crank_nicolson"):
            raise ConfigError(f"scheme must be backward_euler or crank_nicolson, got {self.scheme!r}")


@dataclass(frozen=True)
class HypoSection:
    """``lambda_m = None`` means the coercivity constant is measured."""

    epsilon: float = 0.05
    lambda_m: typing.Optional[float] = None
    k_moment: float = 2.0
    limiter: str = "none"

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.lambda_m is not None and self.lambda_m <= 0:
            raise ConfigError(f"lambda_m must be positive, got {self.lambda_m}")
        if self.k_moment < 2:
            raise ConfigError(f"k_moment must be at least 2, got {self.k_moment}")
        if self.limiter not in ("none", "minmod"):
            raise ConfigError(f"limiter must be none or minmod, got {self.limiter!r}")


@dataclass(frozen=True)
class FitSection:
    """
    ``window = None`` selects the last decade without the final 5%;
    ``tolerance = None`` keeps the per-criterion defaults.
    """

    window: typing.Optional[typing.Tuple[float, float]] = None
    tolerance: typing.Optional[float] = None
    n_random: int = 500

    def __post_init__(self):
        if self.window is not None and not 0 <= self.window[0] < self.window[1]:
            raise ConfigError(f"window must satisfy 0 <= t_lo < t_hi, got {self.window}")
        if self.tolerance is not None and self.tolerance < 0:
            raise ConfigError(f"tolerance must be nonnegative, got {self.tolerance}")
        if self.n_random < 1:
            raise ConfigError(f"n_random must be at least 1, got {self.n_random}")


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    formats: typing.Tuple[str, ...] = ("csv", "json")

    def __post_init__(self):
        unknown = set(self.formats) - {"csv", "json", "snapshot"}
        if unknown:
            raise ConfigError(f"formats must be drawn from csv, json, snapshot, got {sorted(unknown)}")


SECTIONS = {
    "problem": ProblemSection,
    "grid": GridSection,
    "time": TimeSection,
    "hypo": HypoSection,
    "fit": FitSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """
    A parsed experiment.

    ``present`` lists the sections written in the file (or added by
    overrides); ``sweep`` maps "section.key" to the swept raw values.
    """

    problem: ProblemSection = field(default_factory=ProblemSection)
    grid: GridSection = field(default_factory=GridSection)
    time: TimeSection = field(default_factory=TimeSection)
    hypo: HypoSection = field(default_factory=HypoSection)
    fit: FitSection = field(default_factory=FitSection)
    output: OutputSection = field(default_factory=OutputSection)
    sweep: typing.Dict[str, typing.Tuple[str, ...]] = field(default_factory=dict)
    present: typing.FrozenSet[str] = frozenset()

    def require(self, *names: str):
        missing = [name for name in names if name not in self.present]
        if missing:
            raise ConfigError(f"missing required section(s): {', '.join('[' + m + ']' for m in missing)}")

    def to_document(self) -> dict:
        """Plain dict of every section (the sweep excluded), for hashing and manifests."""
        return {name: asdict(getattr(self, name)) for name in SECTIONS}

    def with_output(self, directory: str) -> "ExperimentConfig":
        return replace(self, output=replace(self.output, directory=str(directory)))


def _parse_value(raw: str, annotation, name: str):
    text = raw.strip()
    if annotation is int:
        return int(text)
    if annotation is float:
        return float(text)
    if annotation is str:
        return text
    if annotation == typing.Optional[float]:
        return None if text.lower() in ("none", "auto", "") else float(text)
    if annotation == typing.Optional[typing.Tuple[float, float]]:
        if text.lower() in ("none", "auto", ""):
            return None
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 2:
            raise ValueError(f"expected 't_lo,t_hi', got {text!r}")
        return (parts[0], parts[1])
    if annotation == typing.Tuple[str, ...]:
        return tuple(p.strip() for p in text.split(",") if p.strip())
    raise ValueError(f"unsupported type for {name}")


def _format_value(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _line_index(text: str) -> typing.Dict[typing.Tuple[str, typing.Optional[str]], int]:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    index = {}
    section = None
    for number, line in enumerate(text.splitlines(), start=1):
        match = _SECTION_LINE.match(line)
        if match:
            section = match.group(1).strip()
            index.setdefault((section, None), number)
            continue
        match = _KEY_LINE.match(line)
        if match and section is not None:
            index.setdefault((section, match.group(1).strip().lower()), number)
    return index


def _apply_overrides(parser: configparser.ConfigParser, overrides: typing.Sequence[str]):
    for override in overrides:
        target, sep, value = override.partition("=")
        section, dot, key = target.strip().partition(".")
        if not sep or not dot or not key:
            raise ConfigError(f"override must look like section.key=value, got {override!r}")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.strip().lower(), value.strip())


def parse_config(text: str, overrides: typing.Sequence[str] = (), source: str = "<string>") -> ExperimentConfig:
    """
    Parse INI text into an ``ExperimentConfig``.

    Examples
    --------
    >>> cfg = parse_config("[problem]\\nd = 4\\ngamma = 0.5\\n")
    >>> cfg.problem.d, cfg.problem.gamma, cfg.grid.n_radial
    (4, 0.5, 400)
    >>> parse_config("[problem]\\ncolour = red\\n")
    Traceback (most recent call last):
    ...
    weak_confinement.errors.ConfigError: line 2: unknown key 'colour' in [problem]
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc.message if hasattr(exc, 'message') else exc}",
                          getattr(exc, "lineno", None)) from exc
    lines = _line_index(text)
    _apply_overrides(parser, overrides)

    sections = {}
    sweep = {}
    for section in parser.sections():
        if section == "sweep":
            for key, raw in parser.items(section):
                values = tuple(v.strip() for v in raw.split(",") if v.strip())
                if "." not in key or not values:
                    raise ConfigError(f"sweep entries must look like section.key = v1, v2, got {key!r}",
                                      lines.get((section, key)))
                sweep[key] = values
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        cls = SECTIONS[section]
        hints = typing.get_type_hints(cls)
        names = {f.name for f in fields(cls)}
        kwargs = {}
        for key, raw in parser.items(section):
            line = lines.get((section, key))
            if key not in names:
                raise ConfigError(f"unknown key {key!r} in [{section}]", line)
            try:
                kwargs[key] = _parse_value(raw, hints[key], key)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})", line) from exc
        try:
            sections[section] = cls(**kwargs)
        except ConfigError as exc:
            raise ConfigError(f"[{section}] {exc}", lines.get((section, None))) from exc
    return ExperimentConfig(**sections, sweep=sweep, present=frozenset(parser.sections()))


def load_config(config_path, overrides: typing.Sequence[str] = ()) -> ExperimentConfig:
    """
    Load configuration from an INI file.

    Parameters
    ----------
    config_path : str or Path
        Path to the INI configuration file.
    overrides : sequence of str
        "section.key=value" assignments applied before validation.

    Returns
    -------
    ExperimentConfig
        Validated configuration object.

    Raises
    ------
    ConfigError
        If the file is missing or any section or value is invalid.
    """
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    cfg = parse_config(path.read_text(encoding="utf-8"), overrides, source=str(path))
    logger.debug("loaded %s (sections: %s)", path, ", ".join(sorted(cfg.present)))
    return cfg


def save_config(cfg: ExperimentConfig, config_path):
    """Write every present section (and the sweep) back to INI."""
    parser = configparser.ConfigParser(interpolation=None)
    for name in SECTIONS:
        if name in cfg.present:
            parser[name] = {k: _format_value(v) for k, v in asdict(getattr(cfg, name)).items()}
    if cfg.sweep:
        parser["sweep"] = {k: ", ".join(v) for k, v in cfg.sweep.items()}
    path = Path(config_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        parser.write(f)


def expand_sweep(cfg: ExperimentConfig) -> typing.List[ExperimentConfig]:
    """
    The cartesian product of the ``[sweep]`` values, one config per entry.

    Examples
    --------
    >>> cfg = parse_config("[problem]\\n[sweep]\\nproblem.gamma = 0, 0.4\\ngrid.nx = 16, 32\\n")
    >>> [(c.problem.gamma, c.grid.nx) for c in expand_sweep(cfg)]
    [(0.0, 16), (0.4, 16), (0.0, 32), (0.4, 32)]
    """
    if not cfg.sweep:
        return [cfg]
    keys = sorted(cfg.sweep)
    entries = []
    for values in itertools.product(*(cfg.sweep[k] for k in keys)):
        sections = {name: copy.copy(getattr(cfg, name)) for name in SECTIONS}
        present = set(cfg.present) - {"sweep"}
        for key, raw in zip(keys, values):
            section, _, name = key.partition(".")
            if section not in SECTIONS:
                raise ConfigError(f"sweep refers to unknown section [{section}]")
            hints = typing.get_type_hints(SECTIONS[section])
            if name not in hints:
                raise ConfigError(f"sweep refers to unknown key {name!r} in [{section}]")
            try:
                sections[section] = replace(sections[section], **{name: _parse_value(raw, hints[name], name)})
            except ValueError as exc:
                raise ConfigError(f"sweep value {raw!r} for {key}: {exc}") from exc
            present.add(section)
        entries.append(ExperimentConfig(**sections, present=frozenset(present)))
    return entries


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
