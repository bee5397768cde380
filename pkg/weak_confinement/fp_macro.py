#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Radial solver for the macroscopic Fokker-Planck equation

    du/dt = Laplacian(u) + div(u grad V)

in original variables (t, x) and in self-similar variables
tau = log(1 + 2t) / 2, xi = x / sqrt(1 + 2t), where it reads

    dv/dtau = Laplacian(v) + div(v grad Phi).

Space is discretized by finite volumes on a ``RadialGrid`` with exponentially
fitted (Scharfetter-Gummel / Chang-Cooper) face fluxes. The resulting
operator conserves mass exactly, keeps e^{-Phi} in its kernel and gives an
M-matrix for backward Euler, so positivity and comparison with stationary
supersolutions hold at the discrete level. The face at r = 0 and the outer
face at r_max carry zero flux.
"""

import enum
import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, solve_banded
from scipy.special import exprel

from weak_confinement.errors import DomainError, PreconditionError, SolverError
from weak_confinement.grids import RadialField, RadialGrid
from weak_confinement.potentials import (
    PotentialKind,
    PotentialSpec,
    ProfileParams,
    SelfSimilarPotential,
    moment_bound_closed,
    u_star,
    v_star,
)
from weak_confinement.rates import DecaySeries

logger = logging.getLogger(__name__)


class Frame(str, enum.Enum):
    ORIGINAL = "original"
    SELF_SIMILAR = "self_similar"


class TimeScheme(str, enum.Enum):
    BACKWARD_EULER = "backward_euler"
    CRANK_NICOLSON = "crank_nicolson"


@dataclass(frozen=True, eq=False)
class MacroSolverConfig:
    """
    Settings of a radial Fokker-Planck run.

    In the self-similar frame ``dt`` and ``t_end`` are measured in rescaled
    time tau. Original-frame runs must end before (r_max / 8)^2 so that the
    mass reaching the outer boundary stays negligible.

    Attributes
    ----------
    spec : PotentialSpec
        Confinement potential.
    d : int
        Space dimension; must equal ``grid.d``.
    grid : RadialGrid
        Finite-volume grid (with faces).
    dt, t_end : float
        Time step (at most 0.5) and final time.
    frame : Frame
        Original or self-similar variables.
    mode_k : int
        Spherical-harmonic index; 0 evolves the radial density, k >= 1 a
        signed angular amplitude.
    scheme : TimeScheme
        Backward Euler (default) or Crank-Nicolson.
    n_samples : int
        Requested number of sampled snapshots.
    sample_schedule : str
        "geometric" (log-spaced step indices) or "uniform".
    moment_k : float
        Order of the ``moment_k`` series.
    """

    spec: PotentialSpec
    d: int
    grid: RadialGrid
    dt: float
    t_end: float
    frame: Frame = Frame.ORIGINAL
    mode_k: int = 0
    scheme: TimeScheme = TimeScheme.BACKWARD_EULER
    n_samples: int = 60
    sample_schedule: str = "geometric"
    moment_k: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "frame", Frame(self.frame))
        object.__setattr__(self, "scheme", TimeScheme(self.scheme))
        if self.d < 1:
            raise DomainError(f"d must be at least 1, got {self.d}")
        if self.grid.d != self.d:
            raise DomainError(f"grid dimension {self.grid.d} does not match d = {self.d}")
        self.grid.require_faces()
        if not 0 < self.dt <= 0.5:
            raise DomainError(f"dt must lie in (0, 0.5], got {self.dt}")
        if self.t_end < self.dt:
            raise DomainError(f"t_end must be at least dt = {self.dt}, got {self.t_end}")
        if self.mode_k < 0:
            raise DomainError(f"mode_k must be nonnegative, got {self.mode_k}")
        if self.mode_k > 0 and self.d < 2:
            raise DomainError("angular modes k >= 1 need d >= 2")
        if self.n_samples < 2:
            raise DomainError(f"n_samples must be at least 2, got {self.n_samples}")
        if self.sample_schedule not in ("geometric", "uniform"):
            raise DomainError(
                f"sample_schedule must be 'geometric' or 'uniform', got {self.sample_schedule!r}"
            )
        if self.frame is Frame.ORIGINAL:
            limit = (self.grid.r_max / 8.0) ** 2
            if self.t_end > limit * (1.0 + 1e-12):
                raise DomainError(
                    f"original-frame runs need t_end <= (r_max/8)^2 = {limit:.4g}, got {self.t_end}; "
                    "enlarge r_max or use the self-similar frame"
                )

    def original_time(self, time: float) -> float:
        """Original time t for a solver time (t itself, or tau)."""
        if self.frame is Frame.ORIGINAL:
            return float(time)
        return float(math.expm1(2.0 * time) / 2.0)

    def dilation(self, time: float) -> float:
        """s = 1 + 2t, the factor between the two frames."""
        return 1.0 if self.frame is Frame.ORIGINAL else math.exp(2.0 * time)


@dataclass(frozen=True, eq=False)
class DriftDiffusionOperator:
    """
    Tridiagonal finite-volume operator L with W du/dt = L u.

    ``lower[i]`` is the entry (i, i-1), ``upper[i]`` the entry (i, i+1).
    ``conductance`` holds the face coefficients kappa of the symmetric form
    L diag(e^{-phi}) = -K, where K is the graph Laplacian with weights kappa.
    """

    grid: RadialGrid
    phi: np.ndarray
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    conductance: np.ndarray
    mode_k: int = 0

    def banded(self) -> np.ndarray:
        """The operator in ``solve_banded((1, 1), ...)`` layout."""
        ab = np.zeros((3, self.grid.size))
        ab[0, 1:] = self.upper
        ab[1] = self.diag
        ab[2, :-1] = self.lower[1:]
        return ab

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self.diag * u
        out[:-1] += self.upper * u[1:]
        out[1:] += self.lower[1:] * u[:-1]
        return out

    def dissipation(self, u) -> float:
        """sum over faces of kappa (g_i - g_{i-1})^2 with g = u e^{phi}."""
        g = np.asarray(u, dtype=float) * np.exp(self.phi)
        return float(np.sum(self.conductance * np.diff(g) ** 2))


def bernoulli(x) -> np.ndarray:
    """
    B(x) = x / (e^x - 1), with B(0) = 1.

    Examples
    --------
    >>> float(bernoulli(0.0))
    1.0
    >>> bool(abs(bernoulli(-2.0) - bernoulli(2.0) - 2.0) < 1e-14)
    True
    """
    return 1.0 / exprel(np.asarray(x, dtype=float))


def build_operator(grid: RadialGrid, phi, mode_k: int = 0) -> DriftDiffusionOperator:
    """
    Exponentially fitted discretization of div(e^{-phi} grad(e^{phi} u)).

    The flux across the interior face between nodes i-1 and i is

        A_i / h_i * (B(-D_i) u_i - B(D_i) u_{i-1}),   D_i = phi_i - phi_{i-1},

    with A_i the face area and h_i the node spacing. For ``mode_k > 0`` the
    centrifugal term -k(k+d-2)/r^2 is added on the diagonal.
    """
    grid.require_faces()
    phi = np.asarray(phi, dtype=float)
    if phi.shape != grid.nodes.shape or not np.all(np.isfinite(phi)):
        raise DomainError("drift potential must be finite at every node")
    c = grid.face_areas()[1:-1] / np.diff(grid.nodes)
    delta = np.diff(phi)
    b_up = bernoulli(-delta)
    b_down = bernoulli(delta)

    n = grid.size
    lower = np.zeros(n)
    upper = c * b_up
    lower[1:] = c * b_down
    diag = np.zeros(n)
    diag[:-1] -= c * b_down
    diag[1:] -= c * b_up
    if mode_k:
        diag -= mode_k * (mode_k + grid.d - 2) * grid.weights / grid.nodes ** 2

    # kappa = c B(-D) e^{-phi_i}, shifted for range safety
    shift = float(np.min(phi))
    conductance = c * b_up * np.exp(-(phi[1:] - shift)) * math.exp(-shift)
    return DriftDiffusionOperator(grid, phi, lower, diag, upper, conductance, mode_k)


def drift_potential(cfg: MacroSolverConfig, time: float) -> np.ndarray:
    """Nodal drift potential at solver time ``time`` (t or tau)."""
    nodes = cfg.grid.nodes
    if cfg.frame is Frame.ORIGINAL:
        return cfg.spec.value(nodes)
    return SelfSimilarPotential.at_time(cfg.spec, time).value(nodes)


def _solve_tridiagonal(ab, rhs, diagnostics) -> np.ndarray:
    try:
        out = solve_banded((1, 1), ab, rhs, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SolverError(f"tridiagonal solve failed: {exc}", diagnostics) from exc
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise SolverError("non-finite values after time step", dict(diagnostics, node=bad))
    return out


def _advance(values, cfg: MacroSolverConfig, time: float, dt: float, step: int = 0) -> np.ndarray:
    weights = cfg.grid.weights
    diagnostics = {"step": step, "time": round(time, 12)}
    if cfg.scheme is TimeScheme.BACKWARD_EULER:
        op = build_operator(cfg.grid, drift_potential(cfg, time + dt), cfg.mode_k)
        ab = -dt * op.banded()
        ab[1] += weights
        rhs = weights * values
    else:
        op = build_operator(cfg.grid, drift_potential(cfg, time + 0.5 * dt), cfg.mode_k)
        ab = -0.5 * dt * op.banded()
        ab[1] += weights
        rhs = weights * values + 0.5 * dt * op.apply(values)
    return _solve_tridiagonal(ab, rhs, diagnostics)


def step_macro(
    state: RadialField,
    cfg: MacroSolverConfig,
    time: float = 0.0,
    dt: typing.Optional[float] = None,
) -> RadialField:
    """
    One implicit time step from solver time ``time``.

    Parameters
    ----------
    state : RadialField
        Current density (mode 0) or angular amplitude (mode_k > 0).
    cfg : MacroSolverConfig
        Run settings; ``cfg.dt`` is used unless ``dt`` is given.
    time : float
        Solver time (t or tau) at the start of the step; only matters for
        the time dependent self-similar potential of V2.
    dt : float, optional
        Step length override.

    Returns
    -------
    RadialField
        The state after one step.
    """
    if state.grid is not cfg.grid:
        raise DomainError("state must live on the configured grid")
    if cfg.mode_k == 0:
        state.check_density()
    new_values = _advance(state.values, cfg, time, cfg.dt if dt is None else dt)
    return state.with_values(new_values)


@dataclass(eq=False)
class MacroTrajectory:
    """
    Sampled output of ``run_macro``.

    ``times`` are original times t, ``taus`` the matching rescaled times.
    Snapshots are stored in the solver frame.
    """

    config: MacroSolverConfig
    times: np.ndarray
    taus: np.ndarray
    snapshots: typing.List[RadialField]
    series: typing.Dict[str, DecaySeries] = field(default_factory=dict)

    @property
    def frame(self) -> Frame:
        return self.config.frame

    def solver_times(self) -> np.ndarray:
        return self.times if self.frame is Frame.ORIGINAL else self.taus


def sample_steps(n_steps: int, n_samples: int, schedule: str = "geometric") -> np.ndarray:
    """
    Step indices at which snapshots are taken, always including 0 and n_steps.

    Examples
    --------
    >>> sample_steps(100, 5, "uniform").tolist()
    [0, 25, 50, 75, 100]
    >>> sample_steps(1000, 4).tolist()
    [0, 1, 10, 100, 1000]
    """
    if schedule == "uniform":
        steps = np.round(np.linspace(0, n_steps, n_samples)).astype(int)
    else:
        steps = np.round(np.geomspace(1, n_steps, n_samples)).astype(int)
    return np.unique(np.concatenate([[0], steps, [n_steps]]))


def _moment_weight(cfg: MacroSolverConfig, s: float) -> np.ndarray:
    r = cfg.grid.nodes
    k = cfg.moment_k
    if cfg.spec.kind is PotentialKind.V2:
        return (1.0 + s * r * r) ** (k / 2.0)
    return s ** (k / 2.0) * r ** k


def _observables(values, cfg: MacroSolverConfig, time: float) -> typing.Dict[str, float]:
    grid = cfg.grid
    w = grid.weights
    s = cfg.dilation(time)
    scale = s ** (-grid.d / 2.0)
    phi = drift_potential(cfg, time)
    out = {"l2": scale * float(np.sum(w * values ** 2))}
    if cfg.mode_k:
        shift = float(np.min(phi))
        amplitude_sq = float(np.sum(w * values ** 2 * np.exp(phi - shift))) * math.exp(shift)
        out["mode_amplitude"] = math.sqrt(amplitude_sq)
        return out
    e_v = cfg.spec.exp_value(math.sqrt(s) * grid.nodes)
    out["l2_weighted_eV"] = scale * float(np.sum(w * values ** 2 * e_v))
    out["mass"] = float(np.sum(w * values))
    out["moment_k"] = float(np.sum(w * _moment_weight(cfg, s) * values))
    out["weighted_dissipation"] = build_operator(grid, phi).dissipation(values)
    return out


def run_macro(
    u0: RadialField,
    cfg: MacroSolverConfig,
    params: typing.Optional[ProfileParams] = None,
) -> MacroTrajectory:
    """
    Evolve ``u0`` to ``cfg.t_end`` and sample the decay series.

    Series are reported in original variables whatever the solver frame:
    "l2", "l2_weighted_eV", "mass", "moment_k" and "weighted_dissipation"
    for densities, "l2" and "mode_amplitude" for angular modes. With
    ``params`` the "chi_square_vs_profile" series is added.

    Examples
    --------
    >>> grid = geometric_radial_grid(3, 60.0, 400)  # doctest: +SKIP
    >>> cfg = MacroSolverConfig(PotentialSpec("V2", 1.0), 3, grid, 0.05, 50.0)  # doctest: +SKIP
    >>> traj = run_macro(RadialField.from_function(grid, gauss), cfg)  # doctest: +SKIP
    >>> fit_decay_exponent(traj.series["l2_weighted_eV"]).exponent  # doctest: +SKIP
    -0.98...
    """
    if u0.grid is not cfg.grid:
        raise DomainError("initial datum must live on the configured grid")
    if cfg.mode_k == 0:
        u0.check_density()

    n_steps = max(1, int(math.ceil(cfg.t_end / cfg.dt - 1e-9)))
    dt = cfg.t_end / n_steps
    wanted = set(sample_steps(n_steps, cfg.n_samples, cfg.sample_schedule).tolist())
    logger.info(
        "run_macro: frame=%s kind=%s gamma=%g d=%d mode_k=%d steps=%d dt=%.3g scheme=%s",
        cfg.frame.value, cfg.spec.kind.value, cfg.spec.gamma, cfg.d, cfg.mode_k,
        n_steps, dt, cfg.scheme.value,
    )

    values = np.array(u0.values, dtype=float)
    solver_times, snapshots, rows = [], [], []
    for n in range(n_steps + 1):
        time = n * dt
        if n > 0:
            values = _advance(values, cfg, time - dt, dt, step=n)
        if n in wanted:
            solver_times.append(time)
            snapshots.append(u0.with_values(values))
            rows.append(_observables(values, cfg, time))
        if n and n % max(1, n_steps // 10) == 0:
            logger.debug("run_macro: step %d/%d time=%.4g", n, n_steps, time)

    solver_times = np.asarray(solver_times)
    if cfg.frame is Frame.ORIGINAL:
        times = solver_times
        taus = 0.5 * np.log1p(2.0 * times)
    else:
        taus = solver_times
        times = np.expm1(2.0 * taus) / 2.0
    series = {
        name: DecaySeries(times, [row[name] for row in rows], name) for name in rows[0]
    }
    traj = MacroTrajectory(cfg, times, taus, snapshots, series)
    if params is not None and cfg.mode_k == 0:
        traj.series["chi_square_vs_profile"] = chi_square_distance(traj, params)
    return traj


def _reference_profile(traj: MacroTrajectory, params: ProfileParams, index: int) -> np.ndarray:
    nodes = traj.config.grid.nodes
    if traj.frame is Frame.ORIGINAL:
        return u_star(params, float(traj.times[index]), nodes)
    return v_star(params, float(traj.taus[index]), nodes)


def chi_square_distance(traj: MacroTrajectory, params: ProfileParams) -> DecaySeries:
    """
    Series of the integral of (u - u_star)^2 / u_star over time.

    The quantity is the same in both frames, so no rescaling is applied.
    Nodes where the profile is not positive and finite are skipped.
    """
    if params.d != traj.config.d:
        raise DomainError(f"profile dimension {params.d} does not match d = {traj.config.d}")
    w = traj.config.grid.weights
    values = []
    for i, snapshot in enumerate(traj.snapshots):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ref = _reference_profile(traj, params, i)
            keep = np.isfinite(ref) & (ref > 0)
            diff = snapshot.values[keep] - ref[keep]
            values.append(float(np.sum(w[keep] * diff * diff / ref[keep])))
    return DecaySeries(traj.times, values, "chi_square_vs_profile")


def lp_distance_series(traj: MacroTrajectory, params: ProfileParams, p: float = 1.0) -> DecaySeries:
    """||u(t) - u_star(t)||_p in original variables."""
    if p < 1:
        raise DomainError(f"p must be at least 1, got {p}")
    w = traj.config.grid.weights
    d = traj.config.d
    values = []
    for i, snapshot in enumerate(traj.snapshots):
        s = traj.config.dilation(float(traj.solver_times()[i]))
        diff = np.abs(snapshot.values - _reference_profile(traj, params, i))
        integral = float(np.sum(w * diff ** p)) * s ** (-d * (p - 1.0) / 2.0)
        values.append(integral ** (1.0 / p))
    return DecaySeries(traj.times, values, f"lp_distance_p{p:g}")


@dataclass(frozen=True)
class SupersolutionReport:
    passed: bool
    per_snapshot: typing.Tuple[bool, ...]
    worst_margin: float
    worst_time: float
    worst_radius: float


def supersolution_check(
    traj: MacroTrajectory, params: ProfileParams, slack: float = 1e-8
) -> SupersolutionReport:
    """
    Check u(t, r) <= u_star(t, r) at every sampled node and time.

    The margin is (bound - u) / c_star; a snapshot passes when its smallest
    margin is at least ``-slack``. The comparison is exact for the backward
    Euler scheme in the self-similar frame, where the bound is a discrete
    stationary (V1) or discretely nondecreasing (V2) supersolution.

    Raises
    ------
    PreconditionError
        If the initial datum already exceeds the bound.
    """
    cfg = traj.config
    if cfg.mode_k:
        raise DomainError("the supersolution bound applies to densities (mode_k = 0)")
    gamma = cfg.spec.gamma
    if not 0 <= gamma < cfg.d:
        raise DomainError(f"gamma must lie in [0, d) = [0, {cfg.d}), got {gamma}")
    if abs(params.gamma - gamma) > 1e-12 or params.d != cfg.d:
        raise DomainError("profile parameters do not match the trajectory's potential")
    if gamma and params.sigma != cfg.spec.sigma:
        raise DomainError(
            f"profile sigma {params.sigma} does not match the potential (sigma = {cfg.spec.sigma})"
        )

    bound0 = _reference_profile(traj, params, 0)
    excess = traj.snapshots[0].values - bound0
    if np.any(excess > 1e-12 * float(np.max(bound0))):
        node = int(np.argmax(excess))
        raise PreconditionError(
            f"initial datum exceeds the supersolution at r = {cfg.grid.nodes[node]:.6g} "
            f"(excess {excess[node]:.3e})"
        )

    per_snapshot = []
    worst = (math.inf, 0.0, 0.0)
    for i, snapshot in enumerate(traj.snapshots):
        margin = (_reference_profile(traj, params, i) - snapshot.values) / params.c_star
        j = int(np.argmin(margin))
        per_snapshot.append(bool(margin[j] >= -slack))
        if margin[j] < worst[0]:
            worst = (float(margin[j]), float(traj.times[i]), float(cfg.grid.nodes[j]))
    report = SupersolutionReport(all(per_snapshot), tuple(per_snapshot), *worst)
    logger.info(
        "supersolution check: passed=%s worst margin %.3e at t=%.4g r=%.4g",
        report.passed, report.worst_margin, report.worst_time, report.worst_radius,
    )
    return report


def moment_bound_check(traj: MacroTrajectory, rel_slack: float = 1e-2) -> typing.Tuple[bool, float]:
    """
    Compare the "moment_k" series with its closed-form growth bound.

    For V2 the weight is <x>^k and the bound is taken with gamma = 0, which
    dominates the V2 moment growth; V1 and the free case use |x|^k and the
    gamma dependent bound. Returns (passed, largest ratio M_k / bound).
    """
    cfg = traj.config
    moments = traj.series["moment_k"]
    mass = traj.series["mass"]
    gamma = cfg.spec.gamma if cfg.spec.kind is PotentialKind.V1 else 0.0
    bound = moment_bound_closed(
        cfg.moment_k, cfg.d, gamma, float(moments.values[0]), float(mass.values[0]), moments.times
    )
    ratio = float(np.max(moments.values / bound))
    return ratio <= 1.0 + rel_slack, ratio


def theorem1_bound_check(traj: MacroTrajectory, c: float, rel_slack: float = 1e-6) -> typing.Tuple[bool, float]:
    """
    Check ||u(t)||_2^2 <= ||u0||_2^2 (1 + c t)^{-d/2} at every sample.

    Returns (passed, largest ratio of the left side to the right side).
    """
    l2 = traj.series["l2"]
    bound = l2.values[0] * (1.0 + c * l2.times) ** (-traj.config.d / 2.0)
    ratio = float(np.max(l2.values / bound))
    return ratio <= 1.0 + rel_slack, ratio


def to_self_similar(field: RadialField, t: float, target: typing.Optional[RadialGrid] = None) -> RadialField:
    """
    v(xi) = s^{d/2} u(sqrt(s) xi) with s = 1 + 2t, by linear interpolation.

    ``target`` defaults to the source grid contracted by sqrt(s); values
    beyond the source grid are zero.
    """
    s = 1.0 + 2.0 * t
    target = field.grid.scaled(1.0 / math.sqrt(s)) if target is None else target
    u = np.interp(math.sqrt(s) * target.nodes, field.grid.nodes, field.values, right=0.0)
    return RadialField(target, s ** (field.grid.d / 2.0) * u)


def from_self_similar(field: RadialField, tau: float, target: typing.Optional[RadialGrid] = None) -> RadialField:
    """Inverse of ``to_self_similar``: u(x) = s^{-d/2} v(x / sqrt(s)), s = e^{2 tau}."""
    s = math.exp(2.0 * tau)
    target = field.grid.scaled(math.sqrt(s)) if target is None else target
    v = np.interp(target.nodes / math.sqrt(s), field.grid.nodes, field.values, right=0.0)
    return RadialField(target, s ** (-field.grid.d / 2.0) * v)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
