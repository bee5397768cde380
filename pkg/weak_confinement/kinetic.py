#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Phase-space solver for the kinetic equation in one space dimension

    df/dt + v df/dx - V'(x) df/dv = L f,

with a Fokker-Planck or a scattering collision operator, together with the
discrete hypocoercivity calculus: the projection Pi, the operators T Pi, A
and the twisted entropy H[f] = ||f||^2 / 2 + eps <A f, f>, its dissipation
D[f], and the moments used by the Nash-type closure.

Norms are taken in L^2(F^{-1}) with the local equilibrium F = e^{-V} M. The
transport is a finite-volume scheme acting on g = f / F whose face
coefficients are chosen so that F is an exact discrete steady state. With
centered face values it is skew-adjoint in L^2(F^{-1}); with upwind or
minmod-limited values it is used for time stepping. Collisions are treated
implicitly and combined with transport by Strang splitting.
"""

import enum
import functools
import logging
import math
import typing
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import LinAlgError, eigh, lu_factor, lu_solve, null_space, solve_banded
from scipy.optimize import brentq

from weak_confinement.errors import DomainError, NumericalWarning, SolverError
from weak_confinement.grids import PhaseField, PhaseGrid
from weak_confinement.potentials import PotentialKind, PotentialSpec
from weak_confinement.rates import DecaySeries

logger = logging.getLogger(__name__)


class CollisionKind(str, enum.Enum):
    FOKKER_PLANCK = "fokker_planck"
    SCATTERING = "scattering"


class Limiter(str, enum.Enum):
    NONE = "none"
    MINMOD = "minmod"


def discrete_maxwellian(grid: PhaseGrid) -> typing.Tuple[np.ndarray, float]:
    """
    Gaussian M normalized by the velocity quadrature, and its second moment.

    Examples
    --------
    >>> M, m2 = discrete_maxwellian(PhaseGrid(4.0, 8.0, 9, 161))
    >>> abs(m2 - 1.0) < 1e-8
    True
    """
    v = grid.v
    M = np.exp(-0.5 * v * v)
    M /= np.sum(grid.wv * M)
    m2 = float(np.sum(grid.wv * v * v * M))
    return M, m2


def _banded_from_dense(a: np.ndarray, bandwidth: int) -> np.ndarray:
    n = a.shape[0]
    ab = np.zeros((2 * bandwidth + 1, n))
    for offset in range(-bandwidth, bandwidth + 1):
        diagonal = np.diagonal(a, offset)
        if offset >= 0:
            ab[bandwidth - offset, offset:] = diagonal
        else:
            ab[bandwidth - offset, :n + offset] = diagonal
    return ab


@dataclass(frozen=True, eq=False)
class PhaseOperators:
    """
    Grid- and potential-dependent pieces of the discrete calculus.

    Attributes
    ----------
    M, m2 : discrete Maxwellian and its second moment.
    e_v : e^{V(x_i)} at the nodes.
    E : e^{-V} at the x-faces, zero at the walls (length nx + 1).
    delta : discrete derivative of e^{-V} at the nodes, (E_{i+1/2} - E_{i-1/2}) / wx_i.
    N : velocity-face values of M, -sum_{j' <= j} wv v M, zero at the walls (length nv + 1).
    F : local equilibrium e^{-V} M on the grid.
    Q : discrete gradient, T Pi (M e^{-V} u) = v M e^{-V} (Q u).
    Q_star : adjoint of Q in L^2(wx e^{-V}).
    G : m2 Q_star Q, the discrete version of -Laplacian + V' d/dx.
    """

    grid: PhaseGrid
    spec: PotentialSpec
    M: np.ndarray
    m2: float
    e_v: np.ndarray
    E: np.ndarray
    delta: np.ndarray
    N: np.ndarray
    F: np.ndarray
    Q: np.ndarray
    Q_star: np.ndarray
    G: np.ndarray
    w_banded: np.ndarray
    cfl_dt: float

    def solve_w(self, u) -> np.ndarray:
        """Solve (I + G) w = u."""
        try:
            return solve_banded((2, 2), self.w_banded, np.asarray(u, dtype=float))
        except (LinAlgError, ValueError) as exc:
            raise SolverError(f"w-equation solve failed: {exc}", {"nx": self.grid.nx}) from exc

    def inner_v(self, a, b) -> float:
        """<a, b>_V = sum wx e^{-V} a b."""
        return float(np.sum(self.grid.wx * a * b / self.e_v))

    def norm_sq(self, f) -> float:
        """||f||^2 in L^2(F^{-1})."""
        return float(self.grid.wx @ (f * f / self.F) @ self.grid.wv)

    def inner(self, f, h) -> float:
        return float(self.grid.wx @ (f * h / self.F) @ self.grid.wv)


def _check_potential(spec: PotentialSpec):
    if spec.kind is PotentialKind.V1:
        raise DomainError("the kinetic solver supports V = 0 and V2; V1 is singular at x = 0")


@functools.lru_cache(maxsize=8)
def phase_operators(grid: PhaseGrid, spec: PotentialSpec) -> PhaseOperators:
    """Build (and cache per grid and potential) the discrete operators."""
    _check_potential(spec)
    x, v, wx, wv = grid.x, grid.v, grid.wx, grid.wv
    nx, nv = grid.shape
    M, m2 = discrete_maxwellian(grid)
    e_v = np.exp(spec.value(np.abs(x)))

    E = np.zeros(nx + 1)
    E[1:-1] = np.exp(-spec.value(np.abs(0.5 * (x[:-1] + x[1:]))))
    delta = np.diff(E) / wx
    N = np.zeros(nv + 1)
    N[1:-1] = -np.cumsum(wv * v * M)[:-1]
    F = np.outer(1.0 / e_v, M)

    Q = np.zeros((nx, nx))
    c = 0.5 * E[1:-1]
    rows = np.arange(nx - 1)
    # face i+1/2 contributes c (u_{i+1} - u_i) to rows i and i+1
    for row, scale in ((rows, e_v[:-1] / wx[:-1]), (rows + 1, e_v[1:] / wx[1:])):
        Q[row, rows + 1] += scale * c
        Q[row, rows] -= scale * c
    Q_star = (e_v / wx)[:, None] * Q.T * (wx / e_v)[None, :]
    G = m2 * Q_star @ Q
    w_banded = _banded_from_dense(np.eye(nx) + G, 2)

    # forward Euler upwind transport is positive for dt <= cfl_dt
    out_x = np.abs(v)[None, :] * M[None, :] * np.where(v[None, :] > 0, E[1:, None], E[:-1, None])
    out_v = np.abs(delta)[:, None] * np.where(delta[:, None] > 0, N[None, 1:], N[None, :-1])
    rate = out_x / wx[:, None] + out_v / wv[None, :]
    with np.errstate(divide="ignore"):
        cfl_dt = float(np.min(np.where(rate > 0, F / rate, np.inf)))
    logger.debug("phase operators: nx=%d nv=%d m2=%.12f cfl_dt=%.4g", nx, nv, m2, cfl_dt)
    return PhaseOperators(grid, spec, M, m2, e_v, E, delta, N, F, Q, Q_star, G, w_banded, cfl_dt)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _slopes(g, axis):
    slopes = np.zeros_like(g)
    forward = np.diff(g, axis=axis)
    inner = [slice(None)] * g.ndim
    inner[axis] = slice(1, -1)
    lo = [slice(None)] * g.ndim
    lo[axis] = slice(None, -1)
    hi = [slice(None)] * g.ndim
    hi[axis] = slice(1, None)
    slopes[tuple(inner)] = _minmod(forward[tuple(lo)], forward[tuple(hi)])
    return slopes


def transport_divergence(f, ops: PhaseOperators, scheme: str = "centered") -> np.ndarray:
    """
    Discrete T f = d/dx (v f) - d/dv (V' f) in flux form.

    ``scheme`` is "centered" (skew-adjoint, used by the functionals),
    "upwind" or "minmod" (used for time stepping).
    """
    grid = ops.grid
    g = np.asarray(f, dtype=float) / ops.F
    right_moving = grid.v[None, :] > 0
    up_moving = ops.delta[:, None] > 0

    left, right = g[:-1], g[1:]
    lower, upper = g[:, :-1], g[:, 1:]
    if scheme == "centered":
        gx = 0.5 * (left + right)
        gv = 0.5 * (lower + upper)
    elif scheme in ("upwind", "minmod"):
        if scheme == "minmod":
            sx = 0.5 * _slopes(g, 0)
            sv = 0.5 * _slopes(g, 1)
            left, right = left + sx[:-1], right - sx[1:]
            lower, upper = lower + sv[:, :-1], upper - sv[:, 1:]
        gx = np.where(right_moving, left, right)
        gv = np.where(up_moving, lower, upper)
    else:
        raise DomainError(f"unknown transport scheme {scheme!r}")

    flux_x = np.zeros((grid.nx + 1, grid.nv))
    flux_x[1:-1] = ops.E[1:-1, None] * (grid.v * ops.M)[None, :] * gx
    flux_v = np.zeros((grid.nx, grid.nv + 1))
    flux_v[:, 1:-1] = ops.delta[:, None] * ops.N[None, 1:-1] * gv
    return np.diff(flux_x, axis=0) / grid.wx[:, None] + np.diff(flux_v, axis=1) / grid.wv[None, :]


class FokkerPlanckCollision:
    """
    L f = d/dv (M d/dv (f / M)) with face coefficients N.

    The discretization conserves mass, keeps M in the kernel and satisfies
    L(v M) = -v M exactly.
    """

    kind = CollisionKind.FOKKER_PLANCK
    sigma_bar = 1.0 / math.sqrt(2.0)

    def __init__(self, grid: PhaseGrid):
        self.grid = grid
        M, _ = discrete_maxwellian(grid)
        N = np.zeros(grid.nv + 1)
        N[1:-1] = -np.cumsum(grid.wv * grid.v * M)[:-1]
        scale = 1.0 / (grid.dv * grid.wv)
        upper = scale[:-1] * N[1:-1] / M[1:]
        lower = scale[1:] * N[1:-1] / M[:-1]
        diag = -scale * (N[1:] + N[:-1]) / M
        self.matrix = np.diag(diag) + np.diag(upper, 1) + np.diag(lower, -1)
        self._banded = _banded_from_dense(self.matrix, 1)

    def apply(self, f) -> np.ndarray:
        return np.asarray(f) @ self.matrix.T

    def implicit_step(self, f, dt: float) -> np.ndarray:
        """Solve (I - dt L) f_new = f for every x row."""
        ab = -dt * self._banded
        ab[1] += 1.0
        try:
            return solve_banded((1, 1), ab, np.asarray(f).T).T
        except (LinAlgError, ValueError) as exc:
            raise SolverError(f"collision solve failed: {exc}", {"dt": dt}) from exc


def default_scattering_kernel(v, v_prime):
    """sigma(v, v') = 1 + exp(-(v - v')^2 / 4) / 2: symmetric, between 1 and 3/2."""
    return 1.0 + 0.5 * np.exp(-0.25 * (v - v_prime) ** 2)


class ScatteringCollision:
    """
    L f = int sigma(v, v') (f(v') M(v) - f(v) M(v')) dv'.

    The kernel is validated at construction: it must satisfy
    1 <= sigma <= sigma_bar and the balance condition
    int (sigma(v, v') - sigma(v', v)) M(v') dv' = 0.
    """

    kind = CollisionKind.SCATTERING

    def __init__(self, grid: PhaseGrid, kernel=None, tolerance: float = 1e-8):
        self.grid = grid
        kernel = default_scattering_kernel if kernel is None else kernel
        M, _ = discrete_maxwellian(grid)
        v = grid.v
        sigma = np.asarray(kernel(v[:, None], v[None, :]), dtype=float)
        if sigma.shape != (grid.nv, grid.nv) or not np.all(np.isfinite(sigma)):
            raise DomainError("scattering kernel must be finite on the velocity grid")
        if np.min(sigma) < 1.0:
            raise DomainError(f"scattering rate must satisfy sigma >= 1, min {np.min(sigma):.3e}")
        balance = (sigma - sigma.T) @ (grid.wv * M)
        if np.max(np.abs(balance)) > tolerance * np.max(sigma):
            raise DomainError(f"scattering kernel violates the balance condition (defect {np.max(np.abs(balance)):.3e})")
        self.sigma = sigma
        self.sigma_bar = float(np.max(sigma))
        gain = M[:, None] * sigma * grid.wv[None, :]
        loss = sigma @ (grid.wv * M)
        self.matrix = gain - np.diag(loss)
        self._factors = {}

    def apply(self, f) -> np.ndarray:
        return np.asarray(f) @ self.matrix.T

    def implicit_step(self, f, dt: float) -> np.ndarray:
        if dt not in self._factors:
            try:
                self._factors[dt] = lu_factor(np.eye(self.grid.nv) - dt * self.matrix)
            except (LinAlgError, ValueError) as exc:
                raise SolverError(f"scattering factorization failed: {exc}", {"dt": dt}) from exc
        return lu_solve(self._factors[dt], np.asarray(f).T).T


def make_collision(kind, grid: PhaseGrid, kernel=None):
    kind = CollisionKind(kind)
    if kind is CollisionKind.FOKKER_PLANCK:
        return FokkerPlanckCollision(grid)
    return ScatteringCollision(grid, kernel)


def microscopic_coercivity(collision) -> float:
    """
    Largest lambda_m with -<L h, h> >= lambda_m ||h||^2 for h orthogonal to M.

    Computed as the smallest eigenvalue of -L restricted to the complement
    of the equilibrium direction, in the velocity inner product with
    weight wv / M.
    """
    grid = collision.grid
    M, _ = discrete_maxwellian(grid)
    to_y = np.sqrt(grid.wv / M)
    sym = -(to_y[:, None] * collision.matrix / to_y[None, :])
    sym = 0.5 * (sym + sym.T)
    basis = null_space(np.sqrt(grid.wv * M)[None, :])
    try:
        values = eigh(basis.T @ sym @ basis, eigvals_only=True, subset_by_index=[0, 0])
    except LinAlgError as exc:
        raise SolverError(f"coercivity eigensolve failed: {exc}", {"nv": grid.nv}) from exc
    return float(values[0])


def m_gamma(gamma: float) -> float:
    """3 max{1, gamma}."""
    return 3.0 * max(1.0, gamma)


def lambda_epsilon(lambda_m: float, epsilon: float, m_gamma_value: float, sigma_bar: float) -> float:
    """
    (lambda_m - sqrt((lambda_m - 2 eps)^2 + eps^2 (m_gamma + sqrt(2) sigma_bar)^2)) / 2.

    Examples
    --------
    >>> lambda_epsilon(1.0, 0.0, 3.0, 1.0)
    0.0
    >>> round(lambda_epsilon(1.0, 0.1, 3.0, 1 / math.sqrt(2)), 4)
    0.0528
    """
    c = m_gamma_value + math.sqrt(2.0) * sigma_bar
    return 0.5 * (lambda_m - math.sqrt((lambda_m - 2.0 * epsilon) ** 2 + (epsilon * c) ** 2))


def epsilon_window(lambda_m: float, m_gamma_value: float, sigma_bar: float) -> typing.Tuple[float, float]:
    """Open interval of eps for which lambda_eps > 0 and H is equivalent to ||f||^2."""
    c = m_gamma_value + math.sqrt(2.0) * sigma_bar
    return 0.0, min(1.0, 4.0 * lambda_m / (4.0 + c * c))


@dataclass(frozen=True)
class HypoState:
    """
    Snapshot of the hypocoercivity functionals of one phase field.

    ``macro_pair`` is <A T Pi f, Pi f> = <u - w, u>_V, split as ``grad_term``
    (<G w, w>_V) plus ``laplace_term`` (||G w||_V^2). ``terms`` holds the
    five contributions to D before the factor eps.
    """

    time: float
    mass: float
    norm_sq: float
    micro: float
    macro_norm_sq: float
    macro_pair: float
    grad_term: float
    laplace_term: float
    a_term: float
    H: float
    D: float
    J2: float
    K2: float
    M2: float
    dissipated: float = 0.0
    terms: typing.Dict[str, float] = field(default_factory=dict)


def _moments(f, ops: PhaseOperators):
    grid = ops.grid
    rho = f @ grid.wv
    j = f @ (grid.wv * grid.v)
    return rho, j


def hypo_state(f, ops: PhaseOperators, collision, epsilon: float, time: float = 0.0) -> HypoState:
    """
    Evaluate H[f], D[f] and their ingredients for the field values ``f``.

    D is assembled from its five terms,
    -<L f, f> + eps (<A T Pi f, Pi f> + <A T (1-Pi) f, Pi f>
    - <T A f, (1-Pi) f> - <A L f, f>).
    """
    f = np.asarray(f, dtype=float)
    grid = ops.grid
    rho, j = _moments(f, ops)
    u = ops.e_v * rho
    micro_part = f - np.outer(rho, ops.M)
    w = ops.solve_w(u)
    Qw = ops.Q @ w
    Gw = ops.G @ w
    w_a = ops.solve_w(ops.Q_star @ (ops.e_v * j))

    Lf = collision.apply(f)
    collision_term = -ops.inner(Lf, f)
    pair = ops.inner_v(u - w, u)
    at_micro = float(np.sum(grid.wx * (transport_divergence(micro_part, ops) @ (grid.wv * grid.v)) * Qw))
    ta = float(np.sum(grid.wx * j * (ops.Q @ w_a)))
    al = float(np.sum(grid.wx * (Lf @ (grid.wv * grid.v)) * Qw))
    a_term = float(np.sum(grid.wx * w_a * rho))

    norm_sq = ops.norm_sq(f)
    gamma = ops.spec.gamma
    bracket = np.sqrt(1.0 + grid.x ** 2)
    return HypoState(
        time=float(time),
        mass=float(grid.wx @ rho),
        norm_sq=norm_sq,
        micro=ops.norm_sq(micro_part),
        macro_norm_sq=ops.inner_v(u, u),
        macro_pair=pair,
        grad_term=ops.inner_v(Gw, w),
        laplace_term=ops.inner_v(Gw, Gw),
        a_term=a_term,
        H=0.5 * norm_sq + epsilon * a_term,
        D=collision_term + epsilon * (pair + at_micro - ta - al),
        J2=float(grid.wx @ (bracket ** 2 * rho)),
        K2=float(grid.wx @ f @ (grid.wv * grid.v ** 2)),
        M2=float(np.sum(grid.wx * w * bracket ** (2.0 - gamma))),
        terms={"collision": collision_term, "pair": pair, "at_micro": at_micro, "ta": ta, "al": al},
    )


def projection_pi(field: PhaseField, ops: PhaseOperators) -> PhaseField:
    """Pi f = M(v) rho(x)."""
    rho, _ = _moments(field.values, ops)
    return field.with_values(np.outer(rho, ops.M))


def apply_collision(field: PhaseField, collision) -> PhaseField:
    return field.with_values(collision.apply(field.values))


def solve_w(u, grid: PhaseGrid, spec: PotentialSpec) -> np.ndarray:
    """
    Solve the discrete w - m2 e^V (e^{-V} w')' = u with zero flux at the walls.

    Examples
    --------
    >>> grid = PhaseGrid(10.0, 8.0, 41, 33)
    >>> w = solve_w(np.full(41, 2.0), grid, PotentialSpec("V2", 0.5))
    >>> bool(np.allclose(w, 2.0))
    True
    """
    return phase_operators(grid, spec).solve_w(u)


def macro_pairing(field: PhaseField, ops: PhaseOperators) -> typing.Tuple[float, float]:
    """<A T Pi f, Pi f> and its margin to the bound 5/4 ||u||_V^2."""
    rho, _ = _moments(field.values, ops)
    u = ops.e_v * rho
    pair = ops.inner_v(u - ops.solve_w(u), u)
    return pair, 1.25 * ops.inner_v(u, u) - pair


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1.0 + 1e-10) + 1e-300


def operator_bounds(field: PhaseField, ops: PhaseOperators, collision) -> typing.Dict[str, BoundCheck]:
    """
    The operator estimates behind the coercivity of D, for one field.

    Keys: "A" (||A f|| <= ||(1-Pi) f|| / 2), "TA" (||T A f|| <= ||(1-Pi) f||),
    "TA_form", "ATPi" (pair <= 5/4 ||u||_V^2), "ATPi_grad" (<G w, w> <= ||u||^2 / 4),
    "ATPi_laplace" (||G w|| <= ||u||), "Hessian", "AT(1-Pi)", "AL" and, for
    nonnegative fields, the diagnostic "AL_nonnegative".
    """
    f = field.values
    grid = ops.grid
    gamma = ops.spec.gamma
    rho, j = _moments(f, ops)
    u = ops.e_v * rho
    micro_part = f - np.outer(rho, ops.M)
    micro = math.sqrt(ops.norm_sq(micro_part))
    w = ops.solve_w(u)
    Qw = ops.Q @ w
    Gw = ops.G @ w
    w_a = ops.solve_w(ops.Q_star @ (ops.e_v * j))
    a_field = np.outer(w_a / ops.e_v, ops.M)
    ta_field = np.outer((ops.Q @ w_a) / ops.e_v, grid.v * ops.M)

    u_norm_sq = ops.inner_v(u, u)
    pair = ops.inner_v(u - w, u)
    root_pair = math.sqrt(max(pair, 0.0))
    hess = ops.m2 ** 2 * ops.inner_v(ops.Q @ Qw, ops.Q @ Qw)
    at_micro = float(np.sum(grid.wx * (transport_divergence(micro_part, ops) @ (grid.wv * grid.v)) * Qw))
    al = float(np.sum(grid.wx * (collision.apply(f) @ (grid.wv * grid.v)) * Qw))

    checks = {
        "A": BoundCheck(math.sqrt(ops.norm_sq(a_field)), 0.5 * micro),
        "TA": BoundCheck(math.sqrt(ops.norm_sq(ta_field)), micro),
        "TA_form": BoundCheck(abs(ops.inner(ta_field, micro_part)), micro ** 2),
        "ATPi": BoundCheck(pair, 1.25 * u_norm_sq),
        "ATPi_grad": BoundCheck(ops.inner_v(Gw, w), 0.25 * u_norm_sq),
        "ATPi_laplace": BoundCheck(math.sqrt(ops.inner_v(Gw, Gw)), math.sqrt(u_norm_sq)),
        "Hessian": BoundCheck(hess, max(1.0, gamma) * pair),
        "AT(1-Pi)": BoundCheck(abs(at_micro), m_gamma(gamma) * root_pair * micro),
        "AL": BoundCheck(abs(al), math.sqrt(2.0) * collision.sigma_bar * root_pair * micro),
    }
    if np.all(f >= 0):
        checks["AL_nonnegative"] = BoundCheck(abs(al), collision.sigma_bar * root_pair * micro)
    return checks


def random_phase_field(grid: PhaseGrid, rng: np.random.Generator, n_bumps: int = 3) -> PhaseField:
    """
    Smooth signed field: x-bumps times Hermite modes times M, kept away from the walls.
    """
    M, _ = discrete_maxwellian(grid)
    x, v = grid.x, grid.v
    hermite = [np.ones_like(v), v, v * v - 1.0, v ** 3 - 3.0 * v]
    values = np.zeros(grid.shape)
    for _ in range(n_bumps):
        center = rng.uniform(-grid.x_max / 3.0, grid.x_max / 3.0)
        width = rng.uniform(0.8, 2.5)
        bump = np.exp(-0.5 * ((x - center) / width) ** 2)
        coefficients = rng.normal(size=len(hermite))
        profile = sum(c * h for c, h in zip(coefficients, hermite)) * M
        values += np.outer(bump, profile)
    return PhaseField(grid, values)


def operator_bound_suite(
    grid: PhaseGrid,
    spec: PotentialSpec,
    collision,
    n_fields: int,
    rng: np.random.Generator,
    hessian_slack: float = 1.1,
) -> typing.Dict[str, int]:
    """
    Violation counts of every estimate of ``operator_bounds`` over random fields.

    The Hessian bound is checked against ``hessian_slack`` times its
    right-hand side: the wide centered stencil of Q does not reproduce the
    continuum integration by parts exactly.
    """
    ops = phase_operators(grid, spec)
    violations: typing.Dict[str, int] = {}
    for _ in range(n_fields):
        checks = operator_bounds(random_phase_field(grid, rng), ops, collision)
        for name, check in checks.items():
            if name == "Hessian":
                check = BoundCheck(check.lhs, hessian_slack * check.rhs)
            violations[name] = violations.get(name, 0) + (0 if check.holds else 1)
    logger.info("operator bounds on %d fields: %d violations", n_fields, sum(violations.values()))
    return violations


def smooth_initial_datum(grid: PhaseGrid, width: float = 2.0) -> PhaseField:
    """
    A positive datum away from equilibrium: M(v) g(x) (1 + v e^{-v^2/4} sin(x/2) / 2)
    with g a centered Gaussian of the given width.
    """
    M, _ = discrete_maxwellian(grid)
    x, v = grid.x, grid.v
    if width <= 0 or 6.0 * width > grid.x_max:
        raise DomainError(f"width must lie in (0, x_max/6], got {width}")
    g = np.exp(-0.5 * (x / width) ** 2)
    tilt = 1.0 + 0.5 * np.outer(np.sin(0.5 * x), v * np.exp(-0.25 * v * v))
    return PhaseField(grid, g[:, None] * M[None, :] * tilt)


@dataclass(frozen=True, eq=False)
class KineticConfig:
    """
    Settings of a kinetic run.

    Attributes
    ----------
    spec : PotentialSpec
        V = 0 or V2.
    grid : PhaseGrid
        Phase-space box.
    dt, t_end : float
        Splitting step and final time.
    collision : CollisionKind
        Fokker-Planck or scattering.
    epsilon : float
        Twist parameter of H.
    limiter : Limiter
        "none" (first-order upwind) or "minmod" (second order, SSP-RK2).
    n_samples : int
        Requested number of sampled states (geometric in time).
    cfl : float
        Fraction of the positivity time step used by transport substeps.
    boundary_tolerance : float
        Largest admissible share of mass in |x| > 0.9 X_max.
    lambda_m : float or None
        Coercivity constant of the collision operator; None measures it.
    """

    spec: PotentialSpec
    grid: PhaseGrid
    dt: float
    t_end: float
    collision: CollisionKind = CollisionKind.FOKKER_PLANCK
    epsilon: float = 0.05
    limiter: Limiter = Limiter.NONE
    n_samples: int = 40
    cfl: float = 0.9
    boundary_tolerance: float = 1e-6
    lambda_m: typing.Optional[float] = None

    def __post_init__(self):
        _check_potential(self.spec)
        object.__setattr__(self, "collision", CollisionKind(self.collision))
        object.__setattr__(self, "limiter", Limiter(self.limiter))
        if self.dt <= 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise DomainError(f"t_end must be at least dt = {self.dt}, got {self.t_end}")
        if not 0 < self.epsilon < 1:
            raise DomainError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.cfl <= 1:
            raise DomainError(f"cfl must lie in (0, 1], got {self.cfl}")
        if self.n_samples < 2:
            raise DomainError(f"n_samples must be at least 2, got {self.n_samples}")
        if self.lambda_m is not None and self.lambda_m <= 0:
            raise DomainError(f"lambda_m must be positive, got {self.lambda_m}")


def _transport(f, ops: PhaseOperators, dt: float, cfg: KineticConfig) -> np.ndarray:
    limit = cfg.cfl * ops.cfl_dt * (0.5 if cfg.limiter is Limiter.MINMOD else 1.0)
    n_sub = max(1, int(math.ceil(dt / limit)))
    h = dt / n_sub
    for _ in range(n_sub):
        if cfg.limiter is Limiter.MINMOD:
            f1 = f - h * transport_divergence(f, ops, "minmod")
            f = 0.5 * f + 0.5 * (f1 - h * transport_divergence(f1, ops, "minmod"))
        else:
            f = f - h * transport_divergence(f, ops, "upwind")
    return f


def step_kinetic(field: PhaseField, cfg: KineticConfig, collision=None) -> PhaseField:
    """
    One Strang step T(dt/2) C(dt) T(dt/2).

    ``collision=None`` builds the configured operator; pass ``False`` to
    run free transport only.
    """
    ops = phase_operators(field.grid, cfg.spec)
    if collision is None:
        collision = make_collision(cfg.collision, field.grid)
    f = _transport(field.values, ops, 0.5 * cfg.dt, cfg)
    if collision is not False:
        f = collision.implicit_step(f, cfg.dt)
    f = _transport(f, ops, 0.5 * cfg.dt, cfg)
    if not np.all(np.isfinite(f)):
        raise SolverError("non-finite values after kinetic step", {"dt": cfg.dt})
    return field.with_values(f)


@dataclass(eq=False)
class KineticTrajectory:
    config: KineticConfig
    states: typing.List[HypoState]
    final: PhaseField
    lambda_m: float
    sigma_bar: float
    halted: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.states])

    def series(self, name: str) -> DecaySeries:
        return DecaySeries(self.times, [getattr(s, name) for s in self.states], name)

    @property
    def lambda_eps(self) -> float:
        return lambda_epsilon(self.lambda_m, self.config.epsilon, m_gamma(self.config.spec.gamma), self.sigma_bar)


def boundary_mass_share(f, grid: PhaseGrid) -> float:
    rho = np.asarray(f) @ grid.wv
    total = float(grid.wx @ rho)
    outer = np.abs(grid.x) > 0.9 * grid.x_max
    return float(grid.wx[outer] @ rho[outer]) / total if total else 0.0


def run_kinetic(f0: PhaseField, cfg: KineticConfig) -> KineticTrajectory:
    """
    Evolve ``f0`` to ``cfg.t_end``, recording a ``HypoState`` on a
    geometric time schedule.

    The run stops early with a ``NumericalWarning`` when the share of mass
    near the walls exceeds ``cfg.boundary_tolerance``.
    """
    if f0.grid is not cfg.grid:
        raise DomainError("initial datum must live on the configured grid")
    f0.check_density()
    ops = phase_operators(cfg.grid, cfg.spec)
    collision = make_collision(cfg.collision, cfg.grid)
    lambda_m = microscopic_coercivity(collision) if cfg.lambda_m is None else cfg.lambda_m
    low, high = epsilon_window(lambda_m, m_gamma(cfg.spec.gamma), collision.sigma_bar)
    if not low < cfg.epsilon < high:
        warnings.warn(
            f"epsilon = {cfg.epsilon} is outside the positivity window ({low:.4g}, {high:.4g})",
            NumericalWarning,
            stacklevel=2,
        )

    n_steps = max(1, int(math.ceil(cfg.t_end / cfg.dt - 1e-9)))
    steps = np.unique(np.concatenate([[0], np.round(np.geomspace(1, n_steps, cfg.n_samples)), [n_steps]]))
    wanted = set(int(s) for s in steps)
    logger.info(
        "run_kinetic: kind=%s gamma=%g collision=%s grid=%dx%d steps=%d dt=%.3g (transport cfl dt %.3g) lambda_m=%.4f",
        cfg.spec.kind.value, cfg.spec.gamma, cfg.collision.value, cfg.grid.nx, cfg.grid.nv,
        n_steps, cfg.dt, ops.cfl_dt, lambda_m,
    )

    field_now = f0
    states = []
    halted = False
    dissipated = 0.0
    previous_D = None
    for n in range(n_steps + 1):
        if n > 0:
            field_now = step_kinetic(field_now, cfg, collision)
        state = hypo_state(field_now.values, ops, collision, cfg.epsilon, time=n * cfg.dt)
        if previous_D is not None:
            dissipated += 0.5 * cfg.dt * (previous_D + state.D)
        previous_D = state.D
        if n in wanted:
            states.append(replace(state, dissipated=dissipated))
            share = boundary_mass_share(field_now.values, cfg.grid)
            if share > cfg.boundary_tolerance:
                warnings.warn(
                    f"mass share {share:.2e} near the walls at t = {n * cfg.dt:.4g}; run halted",
                    NumericalWarning,
                    stacklevel=2,
                )
                halted = True
                break
    return KineticTrajectory(cfg, states, field_now, lambda_m, collision.sigma_bar, halted)


def kinetic_property_suite(traj: KineticTrajectory, mass_tol: float = 1e-10) -> typing.Dict[str, bool]:
    """
    Properties checked on a kinetic run.

    * mass conservation within ``mass_tol`` (relative);
    * H nonincreasing between samples;
    * H_n - H_{n+1} >= 0.95 int D dt over every sampling interval but the first;
    * D >= lambda_eps (micro + pair) at every sample;
    * K2 <= 1.5 max(K2(0), m2 mass);
    * J2 <= 1.5 C (1 + t) with C the largest J2 / (1 + t) over the first decade;
    * the run was not halted by the wall monitor.
    """
    states = traj.states
    t = traj.times
    H = np.array([s.H for s in states])
    mass = np.array([s.mass for s in states])
    lam = traj.lambda_eps
    ops = phase_operators(traj.config.grid, traj.config.spec)

    drop = -np.diff(H)
    dissipated = np.diff([s.dissipated for s in states])
    smooth = slice(1, None)
    J2 = np.array([s.J2 for s in states])
    first_decade = t <= max(t[-1] / 10.0, t[1])
    C = float(np.max(J2[first_decade] / (1.0 + t[first_decade])))
    K2 = np.array([s.K2 for s in states])
    return {
        "mass_conserved": bool(np.max(np.abs(mass - mass[0])) <= mass_tol * abs(mass[0])),
        "H_nonincreasing": bool(np.all(np.diff(H) <= 1e-12 * abs(H[0]))),
        "energy_dissipation": bool(np.all(drop[smooth] >= 0.95 * dissipated[smooth])),
        "D_control": bool(all(s.D >= lam * (s.micro + s.macro_pair) - 1e-14 * s.norm_sq for s in states)),
        "K2_bounded": bool(np.all(K2 <= 1.5 * max(K2[0], ops.m2 * mass[0]))),
        "J2_linear": bool(np.all(J2 <= 1.5 * C * (1.0 + t))),
        "not_halted": not traj.halted,
    }


def weighted_moment(w, grid: PhaseGrid, gamma: float, ell: float) -> float:
    """M_ell = int w <x>^{ell - gamma} dx."""
    return float(np.sum(grid.wx * np.asarray(w) * (1.0 + grid.x ** 2) ** ((ell - gamma) / 2.0)))


def x_moment(field: PhaseField, ell: float) -> float:
    """J_ell = int int <x>^ell f dx dv."""
    rho = field.values @ field.grid.wv
    return float(field.grid.wx @ ((1.0 + field.grid.x ** 2) ** (ell / 2.0) * rho))


def v_moment(field: PhaseField, ell: float) -> float:
    """K_ell = int int |v|^ell f dx dv."""
    return float(field.grid.wx @ field.values @ (field.grid.wv * np.abs(field.grid.v) ** ell))


TRAJECTORY_HEADER = ("time", "H", "D", "micro", "macro_pair", "mass", "J2", "K2", "l2_norm")


def trajectory_rows(traj: KineticTrajectory):
    for s in traj.states:
        yield (s.time, s.H, s.D, s.micro, s.macro_pair, s.mass, s.J2, s.K2, math.sqrt(s.norm_sq))


def write_snapshot(field: PhaseField, output_path):
    """Text matrix of f with a one-line header "nx nv x_max v_max"."""
    grid = field.grid
    header = f"{grid.nx} {grid.nv} {grid.x_max!r} {grid.v_max!r}"
    Path(output_path).parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(output_path, field.values, header=header, comments="")


def read_snapshot(input_path) -> PhaseField:
    with open(input_path, "r", encoding="utf-8") as f:
        nx, nv, x_max, v_max = f.readline().split()
    grid = PhaseGrid(float(x_max), float(v_max), int(nx), int(nv))
    values = np.loadtxt(input_path, skiprows=1, ndmin=2)
    return PhaseField(grid, values)


def elliptic_moment_recursion(
    ell: int,
    d: int,
    gamma: float,
    moments: typing.Dict[int, float],
    j_ell: float,
    m2: float = 1.0,
) -> float:
    """
    M_ell = m2 [ell (ell - 2 + d - gamma) M_{ell-2} - ell (ell - 2 - gamma) M_{ell-4}] + J_ell.

    ``moments`` maps indices to M values. Indices <= 0 missing from the map
    are replaced by M_0, which bounds them; a missing positive index is an
    error. ``m2`` is the second velocity moment of M (1 in the continuum).

    Examples
    --------
    >>> elliptic_moment_recursion(2, 3, 1.0, {0: 1.0, -2: 1.0}, 0.0)
    6.0
    >>> elliptic_moment_recursion(4, 1, 0.5, {0: 0.0, 2: 0.0}, 0.0)
    0.0
    """
    def lookup(index):
        if index in moments:
            return float(moments[index])
        if index <= 0 and 0 in moments:
            return float(moments[0])
        raise DomainError(f"moment M_{index} is required for the recursion at ell = {ell}")

    lower = ell * (ell - 2 + d - gamma) * lookup(ell - 2) - ell * (ell - 2 - gamma) * lookup(ell - 4)
    return float(m2 * lower + j_ell)


def nash_envelope(s, M_k: float, K: float, a: float):
    """Phi(s; M) = 2 s + K M^{2(1-a)} s^a for s >= 0."""
    if np.any(np.asarray(s) < 0):
        raise DomainError(f"s must be nonnegative, got {s}")
    return 2.0 * s + K * M_k ** (2.0 * (1.0 - a)) * np.asarray(s, dtype=float) ** a


def nash_envelope_inverse(y: float, M_k: float, K: float, a: float) -> float:
    """The s >= 0 with Phi(s; M) = y (Phi is increasing, and Phi(y/2) >= y)."""
    if y < 0:
        raise DomainError(f"y must be nonnegative, got {y}")
    if y == 0:
        return 0.0
    return float(brentq(lambda s: float(nash_envelope(s, M_k, K, a)) - y, 0.0, 0.5 * y, xtol=1e-300, rtol=1e-14))


@dataclass(frozen=True)
class ZOdeResult:
    times: np.ndarray
    z: np.ndarray
    exponent_expected: float

    def series(self) -> DecaySeries:
        return DecaySeries(self.times, self.z, "z")


def integrate_z_ode(
    d: int,
    gamma: float,
    k: float,
    lambda_eps: float = 1.0,
    K: float = 1.0,
    C_k: float = 1.0,
    epsilon: float = 0.1,
    z0: float = 1.0,
    t_end: float = 1e10,
    n_points: int = 200,
) -> ZOdeResult:
    """
    Solve dz/dt = -lambda_eps Phi^{-1}(2 z / (1 + eps); C_k (1 + t)^{k/2})
    with a = (d + 2k - gamma) / (d + 2 + 2k - gamma).

    The ODE is integrated in s = log(1 + t). The tail decays like
    (1 + t)^{(gamma - d)/2}.
    """
    if not 0 <= gamma < d:
        raise DomainError(f"gamma must lie in [0, d), got {gamma}")
    if k < max(2.0, gamma / 2.0):
        raise DomainError(f"k must be at least max(2, gamma/2), got {k}")
    a = (d + 2.0 * k - gamma) / (d + 2.0 + 2.0 * k - gamma)

    def rhs(s, z):
        t = math.expm1(s)
        moment = C_k * (1.0 + t) ** (k / 2.0)
        value = max(float(z[0]), 0.0)
        return [-(1.0 + t) * lambda_eps * nash_envelope_inverse(2.0 * value / (1.0 + epsilon), moment, K, a)]

    s_eval = np.linspace(0.0, math.log1p(t_end), n_points)
    solution = solve_ivp(rhs, (0.0, s_eval[-1]), [z0], t_eval=s_eval, method="LSODA", rtol=1e-10, atol=1e-300)
    if not solution.success:
        raise SolverError(f"z-ODE integration failed: {solution.message}", {"t_end": t_end})
    return ZOdeResult(np.expm1(solution.t), solution.y[0], (gamma - d) / 2.0)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
