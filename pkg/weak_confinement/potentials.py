#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Confinement potentials, self-similar profiles and closed-form constants.

The two logarithmic potentials are V1(x) = gamma log|x| and
V2(x) = gamma log <x> with <x> = sqrt(1 + |x|^2). In self-similar variables
the drift potential becomes Phi(xi) = |xi|^2 / 2 + (gamma / 2) log(sigma + |xi|^2)
with sigma = 0 for V1 and sigma = exp(-2 tau) for V2.
"""

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from weak_confinement.errors import DomainError

logger = logging.getLogger(__name__)


class PotentialKind(str, enum.Enum):
    NONE = "none"
    V1 = "V1"
    V2 = "V2"


@dataclass(frozen=True)
class PotentialSpec:
    """
    Confinement potential and its strength.

    ``kind = NONE`` forces ``gamma = 0``. The range gamma < d required by the
    decay theorems is checked where an experiment is set up, not here.
    """

    kind: PotentialKind = PotentialKind.NONE
    gamma: float = 0.0

    def __post_init__(self):
        kind = PotentialKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "gamma", 0.0 if kind is PotentialKind.NONE else float(self.gamma))
        if not math.isfinite(self.gamma):
            raise DomainError(f"gamma must be finite, got {self.gamma}")

    @property
    def sigma(self) -> float:
        """Regularization in the self-similar potential: 0 for V1, 1 otherwise."""
        return 0.0 if self.kind is PotentialKind.V1 else 1.0

    def value(self, r) -> np.ndarray:
        """V(r) for an array of radii."""
        r = np.asarray(r, dtype=float)
        if self.kind is PotentialKind.NONE:
            return np.zeros_like(r)
        if self.kind is PotentialKind.V1:
            if np.any(r <= 0):
                raise DomainError("V1 = gamma log r is undefined at r = 0")
            return self.gamma * np.log(r)
        return 0.5 * self.gamma * np.log1p(r * r)

    def radial_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.kind is PotentialKind.NONE:
            return np.zeros_like(r)
        if self.kind is PotentialKind.V1:
            return self.gamma / r
        return self.gamma * r / (1.0 + r * r)

    def exp_value(self, r) -> np.ndarray:
        """e^{V(r)}; for V1 this is r^gamma, computed directly."""
        r = np.asarray(r, dtype=float)
        if self.kind is PotentialKind.V1:
            return r ** self.gamma
        return np.exp(self.value(r))


def eval_potential(spec: PotentialSpec, r: float) -> float:
    """
    Evaluate the potential at radius r.

    Examples
    --------
    >>> eval_potential(PotentialSpec(PotentialKind.V2, 2.0), 0.0)
    0.0
    >>> eval_potential(PotentialSpec(PotentialKind.V1, 3.0), math.e)
    3.0
    """
    if spec.kind is PotentialKind.V1 and r <= 0:
        raise DomainError(f"V1 needs r > 0, got r = {r}")
    return float(spec.value(r))


@dataclass(frozen=True)
class SelfSimilarPotential:
    """Phi(xi) = |xi|^2 / 2 + (gamma / 2) log(sigma + |xi|^2)."""

    gamma: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")

    @classmethod
    def at_time(cls, spec: PotentialSpec, tau: float) -> "SelfSimilarPotential":
        """
        Drift potential of the rescaled equation at rescaled time tau.

        V1 gives the time independent phi_1; V2 gives Phi_2(tau) up to the
        additive constant gamma * tau, which does not enter the drift.
        """
        if spec.kind is PotentialKind.V1:
            return cls(spec.gamma, 0.0)
        if spec.kind is PotentialKind.V2:
            return cls(spec.gamma, math.exp(-2.0 * tau))
        return cls(0.0, 0.0)

    def value(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        x = self.sigma + r * r
        if self.gamma != 0 and np.any(x <= 0):
            raise DomainError("Phi is singular at xi = 0 when sigma = 0 and gamma != 0")
        log_term = 0.5 * self.gamma * np.log(x) if self.gamma != 0 else 0.0
        return 0.5 * r * r + log_term

    def radial_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return r + self.gamma * r / (self.sigma + r * r)

    def laplacian(self, r, d: int) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        x = self.sigma + r * r
        return d + (d - 2) * self.gamma / x + 2.0 * self.gamma * self.sigma / x ** 2


@dataclass(frozen=True)
class ProfileParams:
    """Parameters of the self-similar profile u_star."""

    c_star: float
    gamma: float
    d: int
    sigma: float = 0.0

    def __post_init__(self):
        if self.c_star <= 0:
            raise DomainError(f"c_star must be positive, got {self.c_star}")
        if self.sigma not in (0.0, 1.0):
            raise DomainError(f"sigma must be 0 or 1, got {self.sigma}")


def u_star(params: ProfileParams, t: float, r):
    """
    c_star (1+2t)^{-(d-gamma)/2} (sigma + r^2)^{-gamma/2} exp(-r^2 / (2 (1+2t))).

    Examples
    --------
    >>> float(u_star(ProfileParams(1.0, 1.7, 3), 0.0, 1.0)) == math.exp(-0.5)
    True
    """
    r = np.asarray(r, dtype=float)
    x = params.sigma + r * r
    if params.gamma > 0 and np.any(x <= 0):
        raise DomainError("u_star is singular at r = 0 when sigma = 0 and gamma > 0")
    s = 1.0 + 2.0 * t
    return (
        params.c_star
        * s ** (-(params.d - params.gamma) / 2.0)
        * x ** (-params.gamma / 2.0)
        * np.exp(-r * r / (2.0 * s))
    )


def v_star(params: ProfileParams, tau: float, xi):
    """
    Quasi-equilibrium of the rescaled equation.

    sigma = 0: c_star |xi|^{-gamma} e^{-|xi|^2/2} (time independent).
    sigma = 1: c_star (e^{-2 tau} + |xi|^2)^{-gamma/2} e^{-|xi|^2/2}.
    """
    xi = np.asarray(xi, dtype=float)
    sigma = math.exp(-2.0 * tau) if params.sigma else 0.0
    x = sigma + xi * xi
    if params.gamma > 0 and np.any(x <= 0):
        raise DomainError("v_star is singular at xi = 0 when sigma = 0 and gamma > 0")
    return params.c_star * x ** (-params.gamma / 2.0) * np.exp(-0.5 * xi * xi)


def mass_matched_c_star(grid, u0_values, gamma: float, sigma: float = 0.0) -> float:
    """
    c_star such that the quadrature mass of u_star(0, .) equals that of u0.

    The profile is linear in c_star, so this is one quadrature and a division.
    """
    unit = u_star(ProfileParams(1.0, gamma, grid.d, sigma), 0.0, grid.nodes)
    mass0 = float(np.sum(grid.weights * u0_values))
    unit_mass = float(np.sum(grid.weights * unit))
    if mass0 <= 0:
        raise DomainError(f"initial mass must be positive, got {mass0}")
    return mass0 / unit_mass


def unif_max_bound(gamma: float, t: float) -> float:
    """
    (e / (2 |gamma| t))^{gamma/2}.

    For gamma < 0 this is the maximum over r > 0 of r^{-gamma} exp(-r^2 / (4t));
    for gamma > 0 it is the minimum of r^{-gamma} exp(+r^2 / (4t)).

    Examples
    --------
    >>> unif_max_bound(2.0, math.e / 4)
    1.0
    """
    if gamma == 0:
        raise DomainError("gamma = 0 is degenerate (the maximum is 1)")
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}")
    return float((math.e / (2.0 * abs(gamma) * t)) ** (gamma / 2.0))


def lambda_star(d: int, gamma: float) -> float:
    """
    Closed form min{4, 4(d-gamma), d-1} (d >= 2) or 4(1-gamma) (d = 1).

    gamma = 0 is accepted by continuity for heat-equation baselines.

    Examples
    --------
    >>> lambda_star(3, 1.0)
    2.0
    >>> lambda_star(1, 0.25)
    3.0
    """
    if not 0 <= gamma < d:
        raise DomainError(f"gamma must lie in (0, d) = (0, {d}), got {gamma}")
    if d == 1:
        return 4.0 * (1.0 - gamma)
    return float(min(4.0, 4.0 * (d - gamma), d - 1.0))


def mode_gap(d: int, gamma: float, k: int) -> float:
    """
    Bottom of the mode-k sector of the rescaled operator (sigma = 0).

    k = 0 gives 2 (eigenfunction r^2 - (d - gamma)); k >= 1 gives the positive
    root of a^2 + a (d - 2 - gamma) - k (k + d - 2) = 0 (eigenfunction r^a Y_k).

    Examples
    --------
    >>> round(mode_gap(3, 1.0, 1) ** 2, 12)
    2.0
    >>> mode_gap(3, 0.0, 1)
    1.0
    """
    if not gamma < d:
        raise DomainError(f"gamma must be below d = {d}, got {gamma}")
    if k == 0:
        return 2.0
    if d < 2:
        raise DomainError("angular modes k >= 1 need d >= 2")
    b = d - 2.0 - gamma
    c = float(k * (k + d - 2))
    return float((-b + math.sqrt(b * b + 4.0 * c)) / 2.0)


def lambda_star_sectors(d: int, gamma: float, k_max: int = 2) -> dict:
    """Sector gaps {"radial": 2, "mode_1": ..., ...} next to the formula value."""
    sectors = {"radial": mode_gap(d, gamma, 0)}
    if d >= 2:
        for k in range(1, k_max + 1):
            sectors[f"mode_{k}"] = mode_gap(d, gamma, k)
    sectors["formula"] = lambda_star(d, gamma)
    return sectors


def zeta_p(d: int, gamma: float, p: float) -> float:
    """
    (d/2)(1 - 1/p) + (1/(2p)) min{4, 4(d-gamma), d-1}; p = inf gives d/2.

    Examples
    --------
    >>> zeta_p(3, 1.0, 1.0)
    1.0
    >>> zeta_p(3, 2.5, 2.0)
    1.25
    """
    if p < 1:
        raise DomainError(f"p must be at least 1, got {p}")
    if math.isinf(p):
        return d / 2.0
    gap = lambda_star(d, gamma)
    return float(0.5 * d * (1.0 - 1.0 / p) + gap / (2.0 * p))


def theorem3_lp_bound(
    d: int, gamma: float, p: float, K: float, c_star: float, mass: float, t: float
) -> float:
    """
    K c_star^{1-1/p} |u0|_1^{1/p} (e/(2 gamma))^{(gamma/2)(1-1/p)} (1+2t)^{-zeta_p}.
    """
    if gamma <= 0:
        raise DomainError(f"the L^p envelope needs gamma > 0, got gamma = {gamma}")
    q = 1.0 - 1.0 / p
    return float(
        K
        * c_star ** q
        * mass ** (1.0 / p)
        * (math.e / (2.0 * gamma)) ** (0.5 * gamma * q)
        * (1.0 + 2.0 * t) ** (-zeta_p(d, gamma, p))
    )


def theorem1_rate_constant(
    d: int, gamma: float, c_nash: float, norm1: float, norm2: float
) -> float:
    """
    c = (4/d) min{1, 1 - 2 gamma/(d-2)} C_Nash^{-1} |u0|_2^{4/d} / |u0|_1^{4/d}.

    Examples
    --------
    >>> round(theorem1_rate_constant(3, 0.0, 1.0, 1.0, 1.0), 12)
    1.333333333333
    >>> theorem1_rate_constant(4, 0.5, 1.0, 1.0, 1.0)
    0.5
    """
    if d < 3:
        raise DomainError(f"the L2 decay rate with potential needs d >= 3, got d = {d}")
    if gamma >= (d - 2) / 2.0:
        raise DomainError(
            f"the L2 decay rate requires gamma < (d-2)/2 = {(d - 2) / 2.0}, got gamma = {gamma}"
        )
    if c_nash <= 0 or norm1 <= 0 or norm2 <= 0:
        raise DomainError("c_nash and both norms must be positive")
    factor = min(1.0, 1.0 - 2.0 * gamma / (d - 2))
    return float((4.0 / d) * factor / c_nash * (norm2 / norm1) ** (4.0 / d))


def theorem2_gronwall_bound(
    d: int, gamma: float, k: float, z0: float, a: float, b: float, t
) -> np.ndarray:
    """
    Integrated weighted-decay inequality.

    z(t) <= z0 (1 + a ((1 + b t)^{1 - theta} - 1))^{-(d + 2k - gamma)/2}
    with theta = 2k / (d + 2k - gamma); the tail decays like t^{-(d-gamma)/2}.
    """
    n = d + 2.0 * k - gamma
    if n <= 0:
        raise DomainError(f"d + 2k - gamma must be positive, got {n}")
    theta = 2.0 * k / n
    t = np.asarray(t, dtype=float)
    return z0 * (1.0 + a * ((1.0 + b * t) ** (1.0 - theta) - 1.0)) ** (-n / 2.0)


def theorem2_rate_constant(d: int, gamma: float, k: float, a: float, b: float) -> float:
    """c = b min{a, a^{1/(1-theta)}}: the Gronwall bound is below z0 (1 + c t)^{-(d-gamma)/2}."""
    theta = 2.0 * k / (d + 2.0 * k - gamma)
    return float(b * min(a, a ** (1.0 / (1.0 - theta))))


def schrodinger_psi(gamma: float, sigma: float, r, d: int = 3):
    """
    psi = |grad Phi|^2 / 4 - Delta Phi / 2 for Phi = |xi|^2/2 + (gamma/2) log(sigma + |xi|^2).

    With X = r^2 + sigma:
    4 psi = X - (2d + sigma - 2 gamma) - gamma (2d + 2 sigma - gamma - 4) / X
            - gamma sigma (gamma + 4) / X^2.

    Examples
    --------
    >>> float(schrodinger_psi(0.0, 0.0, 2.0, d=3))
    -0.5
    """
    r = np.asarray(r, dtype=float)
    x = r * r + sigma
    if np.any(x <= 0):
        raise DomainError("psi is undefined where X = r^2 + sigma vanishes")
    return 0.25 * (
        x
        - (2.0 * d + sigma - 2.0 * gamma)
        - gamma * (2.0 * d + 2.0 * sigma - gamma - 4.0) / x
        - gamma * sigma * (gamma + 4.0) / x ** 2
    )


def moment_bound_closed(k: float, d: int, gamma: float, Mk0: float, M0: float, t) -> np.ndarray:
    """
    (M_k(0)^{2/k} + 2 (d + k - 2 - gamma) M_0^{2/k} t)^{k/2}.

    Examples
    --------
    >>> float(moment_bound_closed(2.0, 3, 1.0, 1.0, 1.0, 1.0))
    5.0
    """
    if k < max(2.0, gamma / 2.0):
        raise DomainError(f"k must be at least max(2, gamma/2), got {k}")
    rate = d + k - 2.0 - gamma
    if rate <= 0:
        raise DomainError(f"d + k - 2 - gamma must be positive, got {rate}")
    t = np.asarray(t, dtype=float)
    return (Mk0 ** (2.0 / k) + 2.0 * rate * M0 ** (2.0 / k) * t) ** (k / 2.0)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
