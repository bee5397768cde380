#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Power-law rate fitting and theorem verdicts.

A decay series is fitted on a log-log scale, log(value) against
log(offset + scale * t), by ordinary least squares. Verdicts compare a
measured quantity with its expected value within a per-criterion tolerance
and are collected into ``verdicts.json`` files that ``verdict_bundle`` reads
back.
"""

import enum
import logging
import math
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from weak_confinement.errors import ConfigError, DomainError
from weak_confinement.report_io import read_json, write_json

logger = logging.getLogger(__name__)

VERDICT_FILENAME = "verdicts.json"


class TheoremId(str, enum.Enum):
    T1 = "T1"
    T2 = "T2"
    T3_CORIA = "T3_corIA"
    T4_PROPS = "T4_props"
    HN = "HN"
    CKN = "CKN"
    SPECTRAL = "Spectral"
    UNIFORM = "Uniform"
    MOMENT = "Moment"
    NASH = "Nash"
    HARDY = "Hardy"
    ZODE = "zODE"
    OPERATORS = "Operators"


# Per-criterion tolerances; overridable from the [fit] section.
DEFAULT_TOLERANCES: typing.Dict[str, float] = {
    "T1": 0.15,
    "T2": 0.1,
    "T3_corIA": 0.1,
    "Spectral": 0.02,
    "CKN": 0.1,
    "zODE": 0.1,
    "Hardy": 0.05,
}


@dataclass(frozen=True, eq=False)
class DecaySeries:
    """
    A sampled time series.

    Times are nonnegative and strictly increasing. Values must be finite;
    positivity is only required inside a fit window.
    """

    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise DomainError("times and values must be 1-d arrays of equal length")
        if times.size and (times[0] < 0 or np.any(np.diff(times) <= 0)):
            raise DomainError(f"times of series '{self.label}' must be nonnegative and strictly increasing")
        if not np.all(np.isfinite(values)):
            raise DomainError(f"series '{self.label}' has non-finite values")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return int(self.times.size)

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def scaled(self, factor: float) -> "DecaySeries":
        return DecaySeries(self.times, self.values * factor, self.label)


@dataclass(frozen=True)
class RateFit:
    """Result of a log-log least-squares fit."""

    exponent: float
    intercept: float
    window: typing.Tuple[float, float]
    residual: float
    n_points: int
    label: str = ""

    def predict(self, t, offset: float = 0.0, scale: float = 1.0) -> np.ndarray:
        x = offset + scale * np.asarray(t, dtype=float)
        return np.exp(self.intercept) * x ** self.exponent


def default_window(series: DecaySeries) -> typing.Tuple[float, float]:
    """Last decade of simulated time, without the final 5%."""
    t_end = series.t_end
    return (t_end / 10.0, 0.95 * t_end)


def fit_decay_exponent(
    series: DecaySeries,
    window: typing.Optional[typing.Tuple[float, float]] = None,
    offset: float = 0.0,
    scale: float = 1.0,
    min_points: int = 10,
) -> RateFit:
    """
    Fit value ~ C (offset + scale * t)^exponent on a time window.

    Parameters
    ----------
    series : DecaySeries
        The sampled quantity.
    window : tuple or None
        Closed interval (t_lo, t_hi); default is the last decade without the
        final 5%.
    offset, scale : float
        The abscissa is log(offset + scale * t); use offset 1, scale 2 to fit
        in (1 + 2t).
    min_points : int
        Minimum number of samples inside the window.

    Returns
    -------
    RateFit
        Slope, intercept, window and the maximum relative deviation of the
        fitted power law from the samples in the window.

    Examples
    --------
    >>> t = np.geomspace(1.0, 1e3, 40)
    >>> fit = fit_decay_exponent(DecaySeries(t, (1 + t) ** -1.5), offset=1.0)
    >>> round(fit.exponent, 6)
    -1.5
    """
    lo, hi = default_window(series) if window is None else (float(window[0]), float(window[1]))
    if not lo < hi:
        raise DomainError(f"fit window must satisfy t_lo < t_hi, got ({lo}, {hi})")
    mask = (series.times >= lo) & (series.times <= hi)
    n = int(mask.sum())
    if n < min_points:
        raise DomainError(
            f"fit window ({lo:.4g}, {hi:.4g}) of series '{series.label}' holds {n} samples, "
            f"at least {min_points} needed"
        )
    t = series.times[mask]
    y = series.values[mask]
    if np.any(y <= 0):
        raise DomainError(f"series '{series.label}' has nonpositive values in the fit window")
    x = offset + scale * t
    if np.any(x <= 0):
        raise DomainError("offset + scale * t must be positive in the fit window")
    log_x = np.log(x)
    log_y = np.log(y)
    exponent, intercept = np.polyfit(log_x, log_y, 1)
    predicted = np.exp(intercept + exponent * log_x)
    residual = float(np.max(np.abs(predicted / y - 1.0)))
    fit = RateFit(float(exponent), float(intercept), (lo, hi), residual, n, series.label)
    logger.info(
        "fit %s: exponent %.4f on [%.3g, %.3g] (%d points, residual %.2e)",
        series.label or "series", fit.exponent, lo, hi, n, residual,
    )
    return fit


@dataclass
class TheoremVerdict:
    """
    Outcome of one acceptance criterion.

    Quantitative verdicts pass when |measured - expected| <= tolerance;
    property verdicts carry a dict of named checks and pass when all hold.
    """

    theorem_id: TheoremId
    expected: typing.Union[float, str]
    measured: typing.Optional[float]
    tolerance: float
    passed: bool
    config_hash: str = ""
    description: str = ""
    checks: typing.Dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        self.theorem_id = TheoremId(self.theorem_id)
        if self.tolerance < 0:
            raise DomainError(f"tolerance must be nonnegative, got {self.tolerance}")

    @classmethod
    def quantitative(
        cls,
        theorem_id,
        expected: float,
        measured: float,
        tolerance: float,
        config_hash: str = "",
        description: str = "",
        relative: bool = False,
    ) -> "TheoremVerdict":
        """
        Verdict on a measured number.

        With ``relative=True`` the tolerance is a fraction of |expected|.

        Examples
        --------
        >>> TheoremVerdict.quantitative("T1", -1.5, -1.42, 0.15).passed
        True
        >>> TheoremVerdict.quantitative("Spectral", 2.0, 2.1, 0.02, relative=True).passed
        False
        """
        allowed = tolerance * abs(expected) if relative else tolerance
        passed = bool(math.isfinite(measured) and abs(measured - expected) <= allowed)
        return cls(theorem_id, float(expected), float(measured), float(allowed), passed,
                   config_hash, description)

    @classmethod
    def property_suite(
        cls,
        theorem_id,
        checks: typing.Dict[str, bool],
        config_hash: str = "",
        description: str = "",
    ) -> "TheoremVerdict":
        checks = {name: bool(ok) for name, ok in checks.items()}
        passed = bool(checks) and all(checks.values())
        expected = "all of: " + ", ".join(sorted(checks))
        return cls(theorem_id, expected, None, 0.0, passed, config_hash, description, checks)

    def to_dict(self) -> dict:
        document = asdict(self)
        document["theorem_id"] = self.theorem_id.value
        return document

    @classmethod
    def from_dict(cls, document: dict) -> "TheoremVerdict":
        return cls(**document)


def write_verdicts(verdicts: typing.Sequence[TheoremVerdict], output_dir) -> Path:
    path = Path(output_dir) / VERDICT_FILENAME
    write_json([v.to_dict() for v in verdicts], path)
    return path


def verdict_bundle(output_dir) -> typing.List[TheoremVerdict]:
    """
    Collect every verdict written under ``output_dir``.

    Files are visited in sorted path order, so the bundle is deterministic.
    An existing directory without verdict files gives an empty list.
    """
    root = Path(output_dir)
    if not root.is_dir():
        raise ConfigError(f"output directory not found: {root}")
    bundle = []
    for path in sorted(root.rglob(VERDICT_FILENAME)):
        try:
            documents = read_json(path)
            bundle.extend(TheoremVerdict.from_dict(doc) for doc in documents)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"malformed verdict file {path}: {exc}") from exc
    logger.info("collected %d verdicts from %s", len(bundle), root)
    return bundle


def exit_status(verdicts: typing.Sequence[TheoremVerdict]) -> int:
    """0 when every verdict passes (or there are none), 1 otherwise."""
    return 0 if all(v.passed for v in verdicts) else 1


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
