#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Rayleigh-quotient estimation and verification of Nash, Hardy, Hardy-Nash and
Caffarelli-Kohn-Nirenberg (CKN) inequalities of Nash type on radial trial
functions.

Trial functions are products of elementary radial factors,

    u(r) = r^power <r>^b P(rho) exp(-s rho^q) (1 + rho^2)^(-m) (1 - rho^2/R^2)_+^p,

with rho = r / scale and P(rho) = 1 + c1 rho^2 + c2 rho^4. Their weighted
integrals are computed with ``scipy.integrate.quad``: an algebraic endpoint
weight absorbs the r^kappa behaviour at the origin and the rest of the
half-line is integrated in the logarithmic variable.

A constant obtained by maximizing a quotient over a family is a lower
estimate of the optimal constant; minimizing gives an upper estimate. Every
estimate records its direction.
"""

import enum
import logging
import math
import typing
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.integrate import quad
from scipy.optimize import brentq, minimize, minimize_scalar

from weak_confinement.errors import DomainError
from weak_confinement.grids import (
    RadialField,
    ball_volume,
    gradient_energy,
    radial_integral,
    sphere_area,
    weighted_norm_sq,
)
from weak_confinement.rates import DecaySeries, fit_decay_exponent

logger = logging.getLogger(__name__)


class InequalityName(str, enum.Enum):
    NASH = "Nash"
    HARDY = "Hardy"
    HARDY_NASH = "HardyNash"
    HARDY_NASH2 = "HardyNash2"
    CKN_HOM = "CKN_hom"
    CKN_INHOM = "CKN_inhom"


class EnvelopeDirection(str, enum.Enum):
    UPPER = "UpperEnvelope"
    LOWER = "LowerEnvelope"


@dataclass(frozen=True)
class InequalityEstimate:
    """
    A numerical estimate of an inequality constant.

    ``direction`` says whether ``constant`` bounds the optimal constant from
    above (minimization of a quotient) or from below (maximization).
    ``trials`` and ``worst_margin`` are filled in by verification runs; the
    margin is the smallest relative slack (C * rhs - lhs) / (C * rhs) seen.
    """

    name: InequalityName
    params: typing.Dict[str, float]
    constant: float
    direction: EnvelopeDirection
    family: str = ""
    iterations: int = 0
    best_trial: str = ""
    trials: int = 0
    worst_margin: float = float("nan")

    def __post_init__(self):
        object.__setattr__(self, "name", InequalityName(self.name))
        object.__setattr__(self, "direction", EnvelopeDirection(self.direction))
        if not (self.constant > 0 and math.isfinite(self.constant)):
            raise DomainError(f"constant must be positive and finite, got {self.constant}")

    def to_dict(self) -> dict:
        return {
            "name": self.name.value,
            "params": dict(self.params),
            "constant": self.constant,
            "direction": self.direction.value,
            "optimizer": {"family": self.family, "iterations": self.iterations, "best": self.best_trial},
            "trials": self.trials,
            "worst_margin": self.worst_margin,
        }


@dataclass(frozen=True)
class RadialTrial:
    """A radial trial function built from elementary factors (see module docstring)."""

    power: float = 0.0
    bracket_power: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    s: float = 0.0
    q: float = 2.0
    m: float = 0.0
    bump_radius: float = math.inf
    bump_power: float = 0.0
    scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise DomainError(f"polynomial coefficients must be nonnegative, got {self.c1}, {self.c2}")
        if self.s < 0 or self.m < 0:
            raise DomainError(f"decay parameters must be nonnegative, got s={self.s}, m={self.m}")
        if self.q < 1:
            raise DomainError(f"q must be at least 1, got {self.q}")
        if self.scale <= 0 or self.bump_radius <= 0:
            raise DomainError("scale and bump_radius must be positive")
        if math.isfinite(self.bump_radius) and self.bump_power < 1:
            raise DomainError(f"bump_power must be at least 1, got {self.bump_power}")

    @property
    def support(self) -> float:
        return self.bump_radius * self.scale

    def dilated(self, factor: float) -> "RadialTrial":
        """u(r / factor); ``bracket_power`` must vanish since <r> does not scale."""
        if self.bracket_power != 0:
            raise DomainError("a trial with an unscaled <r> factor cannot be dilated")
        return replace(self, scale=self.scale * factor)

    def outer_radius(self) -> float:
        """Radius beyond which the trial decays."""
        if math.isfinite(self.support):
            return self.support
        reach = 1.0 if self.s == 0 else (1.0 / self.s) ** (1.0 / self.q)
        return max(1.0, self.scale * max(1.0, reach))

    def regular(self, r):
        """u(r) / r^power, finite and positive inside the support."""
        r = np.asarray(r, dtype=float)
        rho = r / self.scale
        rho2 = rho * rho
        value = self.scale ** (-self.power) * (1.0 + self.c1 * rho2 + self.c2 * rho2 * rho2)
        if self.bracket_power:
            value = value * (1.0 + r * r) ** (0.5 * self.bracket_power)
        if self.s:
            value = value * np.exp(-self.s * rho ** self.q)
        if self.m:
            value = value * (1.0 + rho2) ** (-self.m)
        if math.isfinite(self.bump_radius):
            value = value * np.clip(1.0 - rho2 / self.bump_radius ** 2, 0.0, None) ** self.bump_power
        return value

    def regular_radial_derivative(self, r):
        """r d/dr of ``regular``."""
        r = np.asarray(r, dtype=float)
        rho = r / self.scale
        rho2 = rho * rho
        poly = 1.0 + self.c1 * rho2 + self.c2 * rho2 * rho2
        log_slope = (2.0 * self.c1 * rho2 + 4.0 * self.c2 * rho2 * rho2) / poly
        if self.bracket_power:
            log_slope = log_slope + self.bracket_power * r * r / (1.0 + r * r)
        if self.s:
            log_slope = log_slope - self.s * self.q * rho ** self.q
        if self.m:
            log_slope = log_slope - 2.0 * self.m * rho2 / (1.0 + rho2)
        value = self.regular(r)
        if math.isfinite(self.bump_radius):
            inside = rho < self.bump_radius
            with np.errstate(divide="ignore", invalid="ignore"):
                bump_slope = np.where(inside, -2.0 * self.bump_power * rho2 / (self.bump_radius ** 2 - rho2), 0.0)
            return np.where(inside, value * (log_slope + bump_slope), 0.0)
        return value * log_slope

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return r ** self.power * self.regular(r)


class IntegrandKind(str, enum.Enum):
    SQUARE = "square"
    ABS = "abs"
    GRADIENT = "gradient"


def _regular_integrand(trial: RadialTrial, kind: IntegrandKind):
    if kind is IntegrandKind.SQUARE:
        return lambda r: trial.regular(r) ** 2
    if kind is IntegrandKind.ABS:
        return lambda r: abs(trial.regular(r))
    # u' = r^(power - 1) (power * reg + r reg')
    return lambda r: (trial.power * trial.regular(r) + trial.regular_radial_derivative(r)) ** 2


def trial_integral(
    trial: RadialTrial,
    d: int,
    kind,
    weight_power: float = 0.0,
    weight=None,
) -> float:
    """
    Integral over R^d of |x|^weight_power * weight(|x|) * F(u), with F(u) one
    of u^2, |u| and |grad u|^2.

    ``weight`` must be smooth and finite at the origin; homogeneous weights
    go through ``weight_power``.

    Raises
    ------
    DomainError
        When the integral diverges at the origin for this trial, or is not finite.
    """
    kind = IntegrandKind(kind)
    exponent = {IntegrandKind.SQUARE: 2.0 * trial.power, IntegrandKind.ABS: trial.power,
                IntegrandKind.GRADIENT: 2.0 * trial.power - 2.0}[kind]
    kappa = exponent + d - 1 + weight_power
    if kappa <= -1:
        raise DomainError(f"integral diverges at the origin (r^{kappa:.3g} behaviour) for trial {trial.label!r}")
    base = _regular_integrand(trial, kind)
    regular = base if weight is None else (lambda r: base(r) * weight(r))

    r0 = 0.5 * min(1.0, trial.scale, trial.support)
    head, _ = quad(regular, 0.0, r0, weight="alg", wvar=(kappa, 0.0), epsabs=0.0, epsrel=1e-11, limit=200)

    def in_log(t):
        if t > 700.0:
            return 0.0
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            value = float(regular(math.exp(t)))
        if not value > 0:
            return 0.0
        return math.exp(min((kappa + 1.0) * t + math.log(value), 700.0))

    start = math.log(r0)
    if math.isfinite(trial.support):
        edges = list(np.arange(start, math.log(trial.support), 2.0)) + [math.log(trial.support)]
        far = None
    else:
        far = math.log(trial.outer_radius()) + 10.0
        edges = list(np.arange(start, far, 2.0)) + [far]
    tail = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        tail += quad(in_log, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)[0]
    if far is not None:
        tail += quad(in_log, far, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)[0]
    total = sphere_area(d) * (head + tail)
    if not math.isfinite(total):
        raise DomainError(f"integral is not finite for trial {trial.label!r}")
    return float(total)


# ---------------------------------------------------------------------------
# Trial families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialFamily:
    """
    Box-parametrized family of trials.

    ``bounds`` lists (name, low, high, logarithmic) per parameter; ``build``
    maps a parameter dict to a ``RadialTrial``.
    """

    name: str
    bounds: typing.Tuple[typing.Tuple[str, float, float, bool], ...]
    build: typing.Callable[[typing.Dict[str, float]], RadialTrial]
    start: typing.Dict[str, float] = field(default_factory=dict)

    def to_unit(self, params: typing.Dict[str, float]) -> np.ndarray:
        unit = []
        for name, lo, hi, log in self.bounds:
            value = params[name]
            unit.append((math.log(value / lo) / math.log(hi / lo)) if log else (value - lo) / (hi - lo))
        return np.array(unit)

    def from_unit(self, unit) -> typing.Dict[str, float]:
        params = {}
        for (name, lo, hi, log), x in zip(self.bounds, np.clip(unit, 0.0, 1.0)):
            params[name] = lo * (hi / lo) ** x if log else lo + (hi - lo) * x
        return params

    def trial(self, params: typing.Dict[str, float]) -> RadialTrial:
        built = self.build(params)
        tag = ",".join(f"{k}={v:.4g}" for k, v in sorted(params.items()))
        return replace(built, label=f"{self.name}({tag})")

    def sample(self, rng: np.random.Generator) -> RadialTrial:
        return self.trial(self.from_unit(rng.uniform(size=len(self.bounds))))

    def with_scale(self, lo: float = 0.1, hi: float = 10.0) -> "TrialFamily":
        build = self.build
        return TrialFamily(
            self.name + "+scale",
            self.bounds + (("scale", lo, hi, True),),
            lambda p: replace(build(p), scale=p["scale"]),
            dict(self.start, scale=math.sqrt(lo * hi)),
        )


def gauss_poly_family() -> TrialFamily:
    """(1 + c1 r^2 + c2 r^4) exp(-s r^q)."""
    return TrialFamily(
        "gauss_poly",
        (("c1", 0.0, 2.0, False), ("c2", 0.0, 1.0, False), ("s", 0.3, 3.0, True), ("q", 1.0, 3.0, False)),
        lambda p: RadialTrial(c1=p["c1"], c2=p["c2"], s=p["s"], q=p["q"]),
        {"c1": 0.0, "c2": 0.0, "s": 0.5, "q": 2.0},
    )


def bump_family() -> TrialFamily:
    """(1 + c1 r^2)(1 - r^2)_+^p."""
    return TrialFamily(
        "bump",
        (("p", 1.5, 3.5, False), ("c1", 0.0, 2.0, False)),
        lambda p: RadialTrial(c1=p["c1"], bump_radius=1.0, bump_power=p["p"]),
        {"p": 2.0, "c1": 0.0},
    )


def hardy_family(d: int, eps_min: float = 1e-3, eps_max: float = 0.5) -> TrialFamily:
    """r^(-(d-2)/2 + eps) (1 + r^2)^(-(d/2 + 1)): Hardy near-optimizers as eps -> 0."""
    alpha = 0.5 * (d - 2)
    return TrialFamily(
        "hardy",
        (("eps", eps_min, eps_max, True),),
        lambda p: RadialTrial(power=-alpha + p["eps"], m=0.5 * d + 1.0),
        {"eps": math.sqrt(eps_min * eps_max)},
    )


FAMILIES = {"gauss_poly": gauss_poly_family, "bump": bump_family}


def _optimize(objective, family: TrialFamily, maximize: bool, sweeps: int = 2):
    """
    Coordinate-wise bounded scalar searches, then a Powell polish in the unit box.

    Returns (best params, best value, number of objective evaluations).
    """
    sign = -1.0 if maximize else 1.0
    evaluations = [0]
    best = {"value": math.inf, "unit": None}

    def scored(unit):
        evaluations[0] += 1
        try:
            value = sign * objective(family.trial(family.from_unit(unit)))
        except DomainError:
            return math.inf
        if value < best["value"]:
            best.update(value=value, unit=np.array(unit, dtype=float))
        return value

    unit = family.to_unit(family.start) if family.start else np.full(len(family.bounds), 0.5)
    scored(unit)
    for _ in range(sweeps):
        for i in range(len(unit)):
            def along(x, i=i):
                trial_unit = best["unit"].copy() if best["unit"] is not None else unit.copy()
                trial_unit[i] = x
                return scored(trial_unit)

            minimize_scalar(along, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-4})
    if best["unit"] is None:
        raise DomainError(f"no admissible trial in family {family.name}")
    minimize(scored, best["unit"], method="Powell", bounds=[(0.0, 1.0)] * len(unit),
             options={"xtol": 1e-5, "ftol": 1e-10, "maxfev": 400})
    params = family.from_unit(best["unit"])
    return params, sign * best["value"], evaluations[0]


# ---------------------------------------------------------------------------
# Nash
# ---------------------------------------------------------------------------


def nash_quotient(u, d: typing.Optional[int] = None) -> float:
    """
    ||u||_2^(2 + 4/d) / (||u||_1^(4/d) ||grad u||_2^2).

    ``u`` is a ``RadialField`` (grid quadrature) or a ``RadialTrial`` (then
    ``d`` is required).

    Examples
    --------
    >>> q = nash_quotient(RadialTrial(s=0.5), d=3)
    >>> abs(q - 1 / (6 * math.pi)) < 1e-9
    True
    """
    if isinstance(u, RadialField):
        d = u.grid.d
        l2 = weighted_norm_sq(u)
        l1 = radial_integral(u.with_values(np.abs(u.values)))
        grad = gradient_energy(u)
    else:
        if d is None:
            raise DomainError("d is required for trial functions")
        l2 = trial_integral(u, d, "square")
        l1 = trial_integral(u, d, "abs")
        grad = trial_integral(u, d, "gradient")
    if grad <= 0 or l1 <= 0:
        raise DomainError("trial has zero gradient or zero mass")
    return float(l2 ** (1.0 + 2.0 / d) / (l1 ** (4.0 / d) * grad))


def _first_bessel_zero(order: float) -> float:
    x = max(order, 0.5)
    step = 0.25
    while special.jv(order, x) * special.jv(order, x + step) > 0:
        x += step
    return float(brentq(lambda t: special.jv(order, t), x, x + step, xtol=1e-14))


def sharp_nash_constant(d: int) -> float:
    """
    Optimal Nash constant from the first nonzero radial Neumann eigenvalue of the unit ball.

    Examples
    --------
    >>> round(sharp_nash_constant(3), 5)
    0.05852
    >>> abs(sharp_nash_constant(1) - 27 / (16 * math.pi ** 2)) < 1e-12
    True
    """
    if d < 1:
        raise DomainError(f"d must be at least 1, got {d}")
    neumann = _first_bessel_zero(0.5 * d) ** 2
    volume = ball_volume(d, 1.0)
    return float((d + 2) ** ((d + 2) / d) / (2 ** (2.0 / d) * d * neumann * volume ** (2.0 / d)))


def estimate_nash_constant(d: int, families: typing.Sequence[str] = ("gauss_poly", "bump")) -> InequalityEstimate:
    """Largest Nash quotient over the trial families (a lower estimate of the optimal constant)."""
    best = None
    for name in families:
        family = FAMILIES[name]()
        params, value, count = _optimize(lambda t: nash_quotient(t, d), family, maximize=True)
        logger.info("Nash d=%d family %s: %.6f after %d evaluations", d, name, value, count)
        if best is None or value > best.constant:
            best = InequalityEstimate(InequalityName.NASH, {"d": d}, value, EnvelopeDirection.LOWER,
                                      name, count, family.trial(params).label)
    return best


# ---------------------------------------------------------------------------
# Hardy and Hardy-Nash
# ---------------------------------------------------------------------------


def hardy_threshold(d: int) -> float:
    return 0.25 * (d - 2) ** 2


def hardy_quotient(trial: RadialTrial, d: int) -> float:
    """||grad u||^2 / int u^2 / |x|^2."""
    return trial_integral(trial, d, "gradient") / trial_integral(trial, d, "square", weight_power=-2.0)


def hardy_rayleigh(d: int, family: typing.Optional[TrialFamily] = None) -> InequalityEstimate:
    """Infimum of the Hardy quotient over a family (an upper estimate of (d-2)^2/4)."""
    if d < 3:
        raise DomainError(f"Hardy's inequality needs d >= 3, got {d}")
    family = hardy_family(d) if family is None else family
    params, value, count = _optimize(lambda t: hardy_quotient(t, d), family, maximize=False)
    logger.info("Hardy d=%d: %.6f (threshold %.6f)", d, value, hardy_threshold(d))
    return InequalityEstimate(InequalityName.HARDY, {"d": d}, value, EnvelopeDirection.UPPER,
                              family.name, count, family.trial(params).label)


def hardy_nash_constant(d: int, delta: float, c_nash: typing.Optional[float] = None) -> float:
    """
    C_Nash / (1 - 4 delta / (d-2)^2); the sharp Nash constant is used by default.

    Examples
    --------
    >>> hardy_nash_constant(3, 0.0) == sharp_nash_constant(3)
    True
    """
    if d < 3:
        raise DomainError(f"d must be at least 3, got {d}")
    if delta >= hardy_threshold(d):
        raise DomainError(f"delta must be below (d-2)^2/4 = {hardy_threshold(d)}, got {delta}")
    c_nash = sharp_nash_constant(d) if c_nash is None else c_nash
    return c_nash / (1.0 - delta / hardy_threshold(d))


def hardy_nash2_constant(d: int, delta: float, eta: float, c_nash: typing.Optional[float] = None) -> float:
    """C_Nash / min{1 - 4 delta/(d-2)^2, 1 - 4 eta/(d^2-4)}."""
    if d < 3:
        raise DomainError(f"d must be at least 3, got {d}")
    if delta >= hardy_threshold(d):
        raise DomainError(f"delta must be below (d-2)^2/4 = {hardy_threshold(d)}, got {delta}")
    if eta >= 0.25 * (d * d - 4):
        raise DomainError(f"eta must be below (d^2-4)/4 = {0.25 * (d * d - 4)}, got {eta}")
    c_nash = sharp_nash_constant(d) if c_nash is None else c_nash
    return c_nash / min(1.0 - delta / hardy_threshold(d), 1.0 - 4.0 * eta / (d * d - 4))


def _inverse_bracket(power: float):
    return lambda r: (1.0 + r * r) ** (-0.5 * power)


def hardy_nash_bracket(trial: RadialTrial, d: int, delta: float, eta: typing.Optional[float] = None) -> float:
    """
    ||grad u||^2 - delta int u^2/|x|^2, or with ``eta`` the inhomogeneous
    ||grad u||^2 - delta int u^2/<x>^2 - eta int u^2/<x>^4.
    """
    grad = trial_integral(trial, d, "gradient")
    if eta is None:
        return grad - delta * trial_integral(trial, d, "square", weight_power=-2.0)
    return (grad - delta * trial_integral(trial, d, "square", weight=_inverse_bracket(2.0))
            - eta * trial_integral(trial, d, "square", weight=_inverse_bracket(4.0)))


def inhom_hardy_form(trial: RadialTrial, d: int, alpha: typing.Optional[float] = None) -> float:
    """
    ||grad u||^2 + alpha (alpha - d + 2) int u^2/<x>^2 - alpha (alpha + 2) int u^2/<x>^4,
    nonnegative for every alpha; alpha = (d-2)/2 by default.
    """
    alpha = 0.5 * (d - 2) if alpha is None else alpha
    return (trial_integral(trial, d, "gradient")
            + alpha * (alpha - d + 2) * trial_integral(trial, d, "square", weight=_inverse_bracket(2.0))
            - alpha * (alpha + 2) * trial_integral(trial, d, "square", weight=_inverse_bracket(4.0)))


def _verification_trials(d: int, n_trials: int, rng: np.random.Generator, include_hardy: bool = True):
    families = [gauss_poly_family().with_scale(), bump_family().with_scale()]
    if include_hardy:
        families.append(hardy_family(d, eps_min=0.05).with_scale())
    for i in range(n_trials):
        yield families[i % len(families)].sample(rng)


def verify_hardy_nash(
    d: int,
    delta: float,
    n_trials: int,
    rng: np.random.Generator,
    eta: typing.Optional[float] = None,
    c_nash: typing.Optional[float] = None,
) -> InequalityEstimate:
    """
    Check the Hardy-Nash inequality (inhomogeneous form when ``eta`` is given)
    with the closed-form constant on random trials.

    ``passed`` is encoded by ``worst_margin >= 0``.
    """
    if eta is None:
        constant = hardy_nash_constant(d, delta, c_nash)
        name, params = InequalityName.HARDY_NASH, {"d": d, "delta": delta}
    else:
        constant = hardy_nash2_constant(d, delta, eta, c_nash)
        name, params = InequalityName.HARDY_NASH2, {"d": d, "delta": delta, "eta": eta}
    worst = math.inf
    for trial in _verification_trials(d, n_trials, rng):
        lhs = trial_integral(trial, d, "square") ** (1.0 + 2.0 / d)
        rhs = constant * hardy_nash_bracket(trial, d, delta, eta) * trial_integral(trial, d, "abs") ** (4.0 / d)
        worst = min(worst, (rhs - lhs) / abs(rhs) if rhs else -math.inf)
    logger.info("%s d=%d delta=%g: worst relative margin %.3e over %d trials", name.value, d, delta, worst, n_trials)
    return InequalityEstimate(name, params, constant, EnvelopeDirection.UPPER, "closed form",
                              trials=n_trials, worst_margin=worst)


def hardy_nash2_check(d: int, delta: float, eta: float, n_trials: int, rng: np.random.Generator) -> dict:
    """
    Inhomogeneous Hardy-Nash inequality on random trials, and the inhomogeneous
    Hardy form at alpha = (d-2)/2 on the same trials.
    """
    estimate = verify_hardy_nash(d, delta, n_trials, rng, eta=eta)
    form_min = math.inf
    for trial in _verification_trials(d, n_trials, rng):
        scale = trial_integral(trial, d, "gradient")
        form_min = min(form_min, inhom_hardy_form(trial, d) / scale)
    return {
        "estimate": estimate,
        "holds": estimate.worst_margin >= -1e-9,
        "inhom_hardy_min": form_min,
        "inhom_hardy_nonnegative": form_min >= -1e-10,
    }


def hardy_nash_witness(d: int, delta: float, eta: typing.Optional[float] = None):
    """
    A trial making the Hardy-Nash bracket negative, for delta above (d-2)^2/4.

    The homogeneous form uses r^(-(d-2)/2 + eps) near-optimizers; the
    inhomogeneous form uses <r>^(-(d-2)/2 + eps) cut off at a large radius L.
    Returns (trial, bracket).
    """
    if delta <= hardy_threshold(d):
        raise DomainError(f"a witness exists only for delta > (d-2)^2/4 = {hardy_threshold(d)}, got {delta}")
    alpha = 0.5 * (d - 2)
    for eps in (0.1, 0.03, 0.01, 3e-3, 1e-3):
        if eta is None:
            candidates = [RadialTrial(power=-alpha + eps, m=0.5 * d + 1.0, label=f"hardy(eps={eps})")]
        else:
            candidates = [
                RadialTrial(bracket_power=-alpha + eps, m=0.5 * d + 1.0, scale=cutoff,
                            label=f"inhomogeneous hardy(eps={eps}, L={cutoff:.0e})")
                for cutoff in (1e2, 1e4, 1e8, 1e16, 1e32)
            ]
        for trial in candidates:
            bracket = hardy_nash_bracket(trial, d, delta, eta)
            if bracket < 0:
                logger.info("Hardy-Nash witness d=%d delta=%g: %s, bracket %.3e", d, delta, trial.label, bracket)
                return trial, bracket
    raise DomainError(f"no witness found for delta = {delta}; it is too close to the threshold")


# ---------------------------------------------------------------------------
# Caffarelli-Kohn-Nirenberg inequalities of Nash type
# ---------------------------------------------------------------------------


def ckn_exponent(d: int, gamma: float, k: float) -> float:
    """
    a = (d + 2k - gamma) / (d + 2 + 2k - gamma).

    Examples
    --------
    >>> ckn_exponent(3, 1.0, 0.0)
    0.5
    """
    if gamma >= d:
        raise DomainError(f"gamma must be below d = {d}, got {gamma}")
    if k < 0.5 * gamma:
        raise DomainError(f"k must be at least gamma/2 = {0.5 * gamma}, got {k}")
    return (d + 2.0 * k - gamma) / (d + 2.0 + 2.0 * k - gamma)


def ckn_quotient_hom(v, d: int, gamma: float, k: float) -> float:
    """
    int |x|^-g v^2 / [(int |x|^-g |grad v|^2)^a (int |x|^(k-g) |v|)^(2(1-a))].

    ``v`` is a ``RadialTrial`` or a ``RadialField`` on a grid of dimension ``d``;
    on a grid the origin rule of ``grids`` handles the singular weight.
    """
    a = ckn_exponent(d, gamma, k)
    if isinstance(v, RadialField):
        if v.grid.d != d:
            raise DomainError(f"field lives in dimension {v.grid.d}, not {d}")
        num = weighted_norm_sq(v, weight=lambda r: r ** (-gamma))
        grad = gradient_energy(v, weight=lambda r: r ** (-gamma))
        mass = radial_integral(v.with_values(np.abs(v.values)), weight=lambda r: r ** (k - gamma))
        return float(num / (grad ** a * mass ** (2.0 * (1.0 - a))))
    num = trial_integral(v, d, "square", weight_power=-gamma)
    grad = trial_integral(v, d, "gradient", weight_power=-gamma)
    mass = trial_integral(v, d, "abs", weight_power=k - gamma)
    return float(num / (grad ** a * mass ** (2.0 * (1.0 - a))))


def ckn1_quotient(v: RadialTrial, d: int, beta: float) -> float:
    """int |x|^b v^2 / [(int |x|^b |grad v|^2)^a (int |x|^(b/2) |v|)^(2(1-a))] with a = d/(d+2)."""
    if beta <= -d:
        raise DomainError(f"beta must exceed -d = {-d}, got {beta}")
    a = d / (d + 2.0)
    num = trial_integral(v, d, "square", weight_power=beta)
    grad = trial_integral(v, d, "gradient", weight_power=beta)
    mass = trial_integral(v, d, "abs", weight_power=0.5 * beta)
    return float(num / (grad ** a * mass ** (2.0 * (1.0 - a))))


def ckn_quotient_inhom(v: RadialTrial, d: int, gamma: float, k: float) -> float:
    """The quotient of ``ckn_quotient_hom`` with |x| replaced by <x>."""
    a = ckn_exponent(d, gamma, k)
    num = trial_integral(v, d, "square", weight=_inverse_bracket(gamma))
    grad = trial_integral(v, d, "gradient", weight=_inverse_bracket(gamma))
    mass = trial_integral(v, d, "abs", weight=_inverse_bracket(gamma - k))
    return float(num / (grad ** a * mass ** (2.0 * (1.0 - a))))


def _sphere_rule(d: int, n_angular: int):
    """Nodes t = cos(theta) and weights for integrating over S^{d-1} functions of t."""
    if d == 1:
        return np.array([-1.0, 1.0]), np.array([1.0, 1.0])
    exponent = 0.5 * (d - 3)
    t, w = special.roots_jacobi(n_angular, exponent, exponent)
    return t, w * sphere_area(d - 1)


def shifted_bump_integrals(
    d: int,
    shift: float,
    weight,
    bump_power: int = 3,
    n_radial: int = 48,
    n_angular: int = 48,
) -> typing.Tuple[float, float, float]:
    """
    Integrals of weight(|x|) v^2, weight(|x|) |grad v|^2 and |v| * mass_weight(|x|)
    for v(x) = (1 - |x - shift e|^2)_+^p.

    ``weight`` is a pair (w_quadratic, w_mass) of vectorized functions of |x|.
    Polar coordinates are centered on the bump.
    """
    w_quadratic, w_mass = weight
    nodes, weights = special.roots_legendre(n_radial)
    rho = 0.5 * (nodes + 1.0)
    w_rho = 0.5 * weights * rho ** (d - 1)
    t, w_t = _sphere_rule(d, n_angular)
    dist = np.sqrt(np.maximum(shift * shift + rho[:, None] ** 2 + 2.0 * shift * rho[:, None] * t[None, :], 0.0))
    cell = w_rho[:, None] * w_t[None, :]
    v = (1.0 - rho * rho) ** bump_power
    dv = -2.0 * bump_power * rho * (1.0 - rho * rho) ** (bump_power - 1)
    wq = w_quadratic(dist)
    square = float(np.sum(cell * wq * (v * v)[:, None]))
    gradient = float(np.sum(cell * wq * (dv * dv)[:, None]))
    mass = float(np.sum(cell * w_mass(dist) * v[:, None]))
    return square, gradient, mass


def translation_degeneracy(
    d: int,
    gamma: float,
    n_list: typing.Optional[typing.Sequence[float]] = None,
) -> typing.Tuple[float, np.ndarray]:
    """
    Fit the decay of Q[v_n] = (int |x|^-g |grad v_n|^2)^a (int |x|^-g |v_n|)^(2(1-a)) / int |x|^-g v_n^2
    for a bump translated to distance n, with a = (d - gamma)/(d - gamma + 2).

    Returns (slope, quotients); the slope is close to -(1 - a) gamma.
    """
    if not 0 < gamma < d:
        raise DomainError(f"gamma must lie in (0, d), got {gamma}")
    n_list = np.geomspace(8.0, 1024.0, 8) if n_list is None else np.asarray(n_list, dtype=float)
    if np.min(n_list) < 2.0:
        raise DomainError("translations must be at least 2 so that the origin stays outside the support")
    a = ckn_exponent(d, gamma, 0.0)
    w = lambda r: r ** (-gamma)
    quotients = []
    for n in n_list:
        square, gradient, mass = shifted_bump_integrals(d, float(n), (w, w))
        quotients.append(gradient ** a * mass ** (2.0 * (1.0 - a)) / square)
    quotients = np.array(quotients)
    series = DecaySeries(n_list, quotients, "translation quotient")
    fit = fit_decay_exponent(series, window=(n_list[0], n_list[-1]), min_points=min(4, len(n_list)))
    logger.info("translation degeneracy d=%d gamma=%g: slope %.4f (expected %.4f)", d, gamma, fit.exponent, -(1 - a) * gamma)
    return fit.exponent, quotients


def inhom_shift_scan(d: int, gamma: float, k: float, shifts: typing.Sequence[float]) -> np.ndarray:
    """Reciprocal inhomogeneous CKN quotient of a bump translated by each shift."""
    a = ckn_exponent(d, gamma, k)
    wq = _inverse_bracket(gamma)
    wm = _inverse_bracket(gamma - k)
    values = []
    for shift in shifts:
        square, gradient, mass = shifted_bump_integrals(d, float(shift), (wq, wm))
        values.append(gradient ** a * mass ** (2.0 * (1.0 - a)) / square)
    return np.array(values)


def ckn_inhom_check(
    d: int,
    gamma: float,
    k: float,
    n_trials: int,
    rng: np.random.Generator,
    n_calibration: int = 100,
) -> InequalityEstimate:
    """
    Estimate the inhomogeneous CKN constant and verify it on fresh trials.

    The envelope is 1.05 times the largest quotient found by optimization
    over the scaled gauss_poly and bump families and on a calibration sample;
    ``n_trials`` further random trials are then checked against it.
    """
    if not 0 < gamma < d:
        raise DomainError(f"gamma must lie in (0, d), got {gamma}")
    ckn_exponent(d, gamma, k)
    largest, count, label = 0.0, 0, ""
    for family in (gauss_poly_family().with_scale(), bump_family().with_scale()):
        params, value, evaluations = _optimize(lambda t: ckn_quotient_inhom(t, d, gamma, k), family, maximize=True)
        count += evaluations
        if value > largest:
            largest, label = value, family.trial(params).label
    for trial in _verification_trials(d, n_calibration, rng, include_hardy=False):
        value = ckn_quotient_inhom(trial, d, gamma, k)
        if value > largest:
            largest, label = value, trial.label
    envelope = 1.05 * largest
    worst = math.inf
    for trial in _verification_trials(d, n_trials, rng, include_hardy=False):
        worst = min(worst, 1.0 - ckn_quotient_inhom(trial, d, gamma, k) / envelope)
    logger.info("CKN inhom d=%d gamma=%g k=%g: envelope %.6f, worst margin %.3e", d, gamma, k, envelope, worst)
    return InequalityEstimate(InequalityName.CKN_INHOM, {"d": d, "gamma": gamma, "k": k}, envelope,
                              EnvelopeDirection.LOWER, "gauss_poly+bump", count, label, n_trials, worst)


def estimate_ckn_hom(d: int, gamma: float, k: float) -> InequalityEstimate:
    """Largest homogeneous CKN quotient over the gauss_poly and bump families."""
    best = None
    for family in (gauss_poly_family(), bump_family()):
        params, value, count = _optimize(lambda t: ckn_quotient_hom(t, d, gamma, k), family, maximize=True)
        if best is None or value > best.constant:
            best = InequalityEstimate(InequalityName.CKN_HOM, {"d": d, "gamma": gamma, "k": k}, value,
                                      EnvelopeDirection.LOWER, family.name, count, family.trial(params).label)
    return best


def beta_from_delta(d: int, delta: float) -> float:
    """
    beta = 2 - d + sqrt((d-2)^2 - 4 delta).

    Examples
    --------
    >>> beta_from_delta(3, 0.1875)
    -0.5
    """
    if delta >= hardy_threshold(d):
        raise DomainError(f"delta must be below (d-2)^2/4 = {hardy_threshold(d)}, got {delta}")
    return 2.0 - d + math.sqrt((d - 2) ** 2 - 4.0 * delta)


def delta_from_beta(d: int, beta: float) -> float:
    return -0.25 * beta * beta - 0.5 * beta * (d - 2)


def ckn_beta_bridge(d: int, delta: float, n_trials: int = 50, rng: typing.Optional[np.random.Generator] = None):
    """
    The weight exponent beta turning the CKN inequality with |x|^beta weights
    into the Hardy-Nash inequality with parameter delta, and a check of the
    change of variables v = |x|^(-beta/2) u on random trials.

    Returns (beta, report) where report holds the round-trip delta and the
    largest relative difference between the two quotients.
    """
    beta = beta_from_delta(d, delta)
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for trial in _verification_trials(d, n_trials, rng, include_hardy=False):
        v = replace(trial, power=trial.power - 0.5 * beta)
        ckn_form = ckn1_quotient(v, d, beta) ** ((d + 2.0) / d)
        hn_form = (trial_integral(trial, d, "square") ** (1.0 + 2.0 / d)
                   / (hardy_nash_bracket(trial, d, delta) * trial_integral(trial, d, "abs") ** (4.0 / d)))
        worst = max(worst, abs(ckn_form / hn_form - 1.0))
    return beta, {"delta_round_trip": delta_from_beta(d, beta), "max_relative_difference": worst, "trials": n_trials}


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
