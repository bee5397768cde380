#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Spectra of the rescaled Fokker-Planck operator and of weighted Poincare
problems.

The rescaled operator v -> Laplacian(v) + div(v grad Phi) is self-adjoint in
L^2(e^{Phi}). Writing v = e^{-Phi} g gives the generalized problem

    -div(e^{-Phi} grad g) = lambda e^{-Phi} g,

which is discretized with the same finite-volume conductances as the time
stepper and symmetrized into a tridiagonal matrix. It is unitarily equivalent
to the Schrodinger form -Laplacian + psi acting on w = g e^{-Phi/2}, which is
available as an alternative discretization.
"""

import logging
import math
import typing
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, eigh, eigh_tridiagonal, null_space

from weak_confinement.errors import DomainError, NumericalWarning, SolverError
from weak_confinement.fp_macro import build_operator
from weak_confinement.grids import RadialGrid, radial_grid_from_faces, sphere_area
from weak_confinement.potentials import (
    SelfSimilarPotential,
    lambda_star,
    mode_gap,
    schrodinger_psi,
)

logger = logging.getLogger(__name__)

CONTINUUM_THRESHOLD = 4.0
TAIL_WARNING = 1e-4


@dataclass(frozen=True, eq=False)
class SpectralProblem:
    """
    Radial or mode-k eigenproblem of the rescaled operator.

    ``form`` selects the discretization: "ground_state" (exponentially
    fitted, exact kernel) or "schrodinger" (plain Laplacian plus psi).
    """

    d: int
    gamma: float
    sigma: float
    mode_k: int
    grid: RadialGrid
    count: int = 4
    form: str = "ground_state"

    def __post_init__(self):
        if self.grid.d != self.d:
            raise DomainError(f"grid dimension {self.grid.d} does not match d = {self.d}")
        self.grid.require_faces()
        if self.sigma < 0:
            raise DomainError(f"sigma must be nonnegative, got {self.sigma}")
        if not self.gamma < self.d:
            raise DomainError(f"gamma must be below d = {self.d}, got {self.gamma}")
        if self.mode_k < 0 or (self.mode_k > 0 and self.d < 2):
            raise DomainError(f"mode_k must be 0, or positive with d >= 2, got {self.mode_k}")
        if self.count < 1:
            raise DomainError(f"count must be at least 1, got {self.count}")
        if self.form not in ("ground_state", "schrodinger"):
            raise DomainError(f"form must be 'ground_state' or 'schrodinger', got {self.form!r}")
        if self.form == "schrodinger" and self.sigma == 0 and self.gamma != 0:
            raise DomainError("the Schrodinger form needs sigma > 0 when gamma != 0")

    def with_grid(self, grid: RadialGrid) -> "SpectralProblem":
        return SpectralProblem(self.d, self.gamma, self.sigma, self.mode_k, grid, self.count, self.form)


@dataclass(frozen=True)
class SpectralResult:
    """
    Lowest eigenvalues (the kernel of mode 0 removed) with diagnostics.

    ``eigenfunction_norm_tails`` is the share of each normalized
    eigenvector's mass beyond r_max / 2. ``sector_gap`` is the closed-form
    bottom of the sector and ``formula`` the min-formula value, when defined.
    """

    eigenvalues: np.ndarray
    eigenfunction_norm_tails: np.ndarray
    problem: SpectralProblem
    continuum_adjacent: typing.Tuple[bool, ...] = ()
    grid_sizes: typing.Tuple[int, ...] = ()
    converged: bool = True
    sector_gap: typing.Optional[float] = None
    formula: typing.Optional[float] = None
    notes: typing.Tuple[str, ...] = ()

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[0])


def refine_grid(grid: RadialGrid) -> RadialGrid:
    """Split every cell in two (face midpoints inserted)."""
    grid.require_faces()
    faces = grid.faces
    mids = 0.5 * (faces[:-1] + faces[1:])
    merged = np.empty(faces.size + mids.size)
    merged[0::2] = faces
    merged[1::2] = mids
    return radial_grid_from_faces(grid.d, merged)


def _ground_state_matrix(problem: SpectralProblem) -> typing.Tuple[np.ndarray, np.ndarray]:
    grid = problem.grid
    phi = SelfSimilarPotential(problem.gamma, problem.sigma).value(grid.nodes)
    shift = float(np.min(phi))
    phi = phi - shift
    conductance = build_operator(grid, phi).conductance
    mass = grid.weights * np.exp(-phi)

    diag = np.zeros(grid.size)
    diag[:-1] += conductance
    diag[1:] += conductance
    # Dirichlet condition at r_max
    outer = SelfSimilarPotential(problem.gamma, problem.sigma).value(grid.r_max) - shift
    diag[-1] += grid.face_areas()[-1] * math.exp(-outer) / (grid.r_max - grid.nodes[-1])

    scale = 1.0 / np.sqrt(mass)
    return diag * scale * scale, -conductance * scale[:-1] * scale[1:]


def _schrodinger_matrix(problem: SpectralProblem) -> typing.Tuple[np.ndarray, np.ndarray]:
    grid = problem.grid
    stiffness = grid.face_areas()[1:-1] / np.diff(grid.nodes)
    diag = grid.weights * schrodinger_psi(problem.gamma, problem.sigma, grid.nodes, d=problem.d)
    diag[:-1] += stiffness
    diag[1:] += stiffness
    diag[-1] += grid.face_areas()[-1] / (grid.r_max - grid.nodes[-1])
    scale = 1.0 / np.sqrt(grid.weights)
    return diag * scale * scale, -stiffness * scale[:-1] * scale[1:]


def _solve(problem: SpectralProblem) -> typing.Tuple[np.ndarray, np.ndarray]:
    grid = problem.grid
    if problem.form == "ground_state":
        diag, off = _ground_state_matrix(problem)
    else:
        diag, off = _schrodinger_matrix(problem)
    k = problem.mode_k
    if k:
        diag = diag + k * (k + problem.d - 2) / grid.nodes ** 2
    skip = 0 if k else 1
    n_wanted = min(problem.count + skip, grid.size) - 1
    try:
        values, vectors = eigh_tridiagonal(diag, off, select="i", select_range=(0, n_wanted))
    except (LinAlgError, ValueError) as exc:
        raise SolverError(
            f"tridiagonal eigensolve failed: {exc}",
            {"d": problem.d, "gamma": problem.gamma, "sigma": problem.sigma, "mode_k": k, "n": grid.size},
        ) from exc
    if not np.all(np.isfinite(values)):
        raise SolverError("eigensolver returned non-finite values", {"n": grid.size})
    outer = grid.nodes > grid.r_max / 2.0
    tails = np.sum(vectors[outer] ** 2, axis=0) / np.sum(vectors ** 2, axis=0)
    return values[skip:], tails[skip:]


def poincare_gap(
    problem: SpectralProblem,
    refine: bool = True,
    max_doublings: int = 3,
    rel_change: float = 0.005,
) -> SpectralResult:
    """
    Lowest nonzero eigenvalues of the rescaled operator in one sector.

    The grid is doubled until the requested eigenvalues move by less than
    ``rel_change`` (at most ``max_doublings`` times); the finest solve is
    returned. Mode 0 has the constant (equilibrium) mode removed.

    Parameters
    ----------
    problem : SpectralProblem
        Operator and grid.
    refine : bool
        Run the refinement loop; otherwise solve once on ``problem.grid``.
    max_doublings : int
        Cap on grid doublings.
    rel_change : float
        Convergence criterion on the relative change of every eigenvalue.

    Returns
    -------
    SpectralResult

    Examples
    --------
    >>> grid = geometric_radial_grid(3, 12.0, 400)  # doctest: +SKIP
    >>> poincare_gap(SpectralProblem(3, 2.5, 0.0, 0, grid)).gap  # doctest: +SKIP
    2.000...
    """
    values, tails = _solve(problem)
    sizes = [problem.grid.size]
    converged = not refine
    doublings = 0
    while refine and doublings < max_doublings:
        problem = problem.with_grid(refine_grid(problem.grid))
        new_values, new_tails = _solve(problem)
        sizes.append(problem.grid.size)
        doublings += 1
        n = min(values.size, new_values.size)
        change = np.max(np.abs(new_values[:n] - values[:n]) / np.maximum(np.abs(new_values[:n]), 1e-12))
        values, tails = new_values, new_tails
        logger.debug("poincare_gap: n=%d relative change %.2e", problem.grid.size, change)
        if change < rel_change:
            converged = True
            break

    notes = []
    if not converged:
        notes.append(f"eigenvalues not converged after {max_doublings} grid doublings")
    if tails.size and tails[0] > TAIL_WARNING:
        notes.append(f"lowest eigenfunction has mass {tails[0]:.2e} beyond r_max/2; enlarge r_max")
    for note in notes:
        warnings.warn(note, NumericalWarning, stacklevel=2)

    adjacent = tuple(bool(abs(v - CONTINUUM_THRESHOLD) <= 0.02 * CONTINUUM_THRESHOLD) for v in values)
    sector = formula = None
    if problem.sigma == 0:
        sector = mode_gap(problem.d, problem.gamma, problem.mode_k)
        if 0 <= problem.gamma < problem.d:
            formula = lambda_star(problem.d, problem.gamma)
    result = SpectralResult(
        eigenvalues=values,
        eigenfunction_norm_tails=tails,
        problem=problem,
        continuum_adjacent=adjacent,
        grid_sizes=tuple(sizes),
        converged=converged,
        sector_gap=sector,
        formula=formula,
        notes=tuple(notes),
    )
    logger.info(
        "spectrum d=%d gamma=%g sigma=%g mode=%d: gap %.6f (sector %s, formula %s, n=%d)",
        problem.d, problem.gamma, problem.sigma, problem.mode_k, result.gap,
        "n/a" if sector is None else f"{sector:.6f}",
        "n/a" if formula is None else f"{formula:.6f}",
        problem.grid.size,
    )
    return result


def sigma_continuity_scan(
    d: int,
    gamma: float,
    sigmas: typing.Sequence[float],
    grid: RadialGrid,
    mode_k: int = 0,
    refine: bool = False,
) -> typing.List[float]:
    """Gap for each sigma in a sorted list of values in [0, 1]."""
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise DomainError("sigmas must not be empty")
    if any(b < a for a, b in zip(sigmas, sigmas[1:])):
        raise DomainError("sigmas must be sorted")
    if sigmas[0] < 0 or sigmas[-1] > 1:
        raise DomainError(f"sigmas must lie in [0, 1], got {sigmas[0]} .. {sigmas[-1]}")
    gaps = []
    for sigma in sigmas:
        result = poincare_gap(SpectralProblem(d, gamma, sigma, mode_k, grid, count=1), refine=refine)
        gaps.append(result.gap)
    logger.info("sigma scan d=%d gamma=%g: min gap %.6f", d, gamma, min(gaps))
    return gaps


def ball_poincare_constant(R: float, d: int, gamma: float, k_weight: float, n: int = 400) -> float:
    """
    Best constant lambda in the weighted Poincare inequality on the ball B_R

        lambda * int |w|^2 |x|^{-gamma} <= int |grad w|^2 |x|^{-gamma}

    for radial w with int w |x|^{k_weight - gamma} = 0.

    The constraint direction is projected out of the discrete quadratic
    forms and the smallest eigenvalue of the reduced pencil is returned.
    Uniform cells make the discrete problem scale exactly like R^{-2}.

    Examples
    --------
    >>> round(ball_poincare_constant(1.0, 1, 0.0, 0.0, n=400) / math.pi ** 2, 4)
    1.0
    """
    if R <= 0:
        raise DomainError(f"R must be positive, got {R}")
    if not 0 <= gamma < d:
        raise DomainError(f"gamma must lie in [0, d) = [0, {d}), got {gamma}")
    if k_weight < gamma / 2.0:
        raise DomainError(f"k_weight must be at least gamma/2 = {gamma / 2.0}, got {k_weight}")
    if n < 8:
        raise DomainError(f"n must be at least 8, got {n}")

    area = sphere_area(d)
    faces = np.linspace(0.0, R, n + 1)
    nodes = 0.5 * (faces[:-1] + faces[1:])
    inner = faces[1:-1]
    conductance = area * inner ** (d - 1.0 - gamma) / np.diff(nodes)
    p = d - gamma
    mass = area * (faces[1:] ** p - faces[:-1] ** p) / p
    q = d + k_weight - gamma
    constraint = area * (faces[1:] ** q - faces[:-1] ** q) / q

    stiffness = np.zeros((n, n))
    idx = np.arange(n - 1)
    stiffness[idx, idx] += conductance
    stiffness[idx + 1, idx + 1] += conductance
    stiffness[idx, idx + 1] -= conductance
    stiffness[idx + 1, idx] -= conductance

    basis = null_space(constraint[None, :])
    reduced_k = basis.T @ stiffness @ basis
    reduced_m = basis.T @ (mass[:, None] * basis)
    try:
        values = eigh(reduced_k, reduced_m, eigvals_only=True, subset_by_index=[0, 0])
    except LinAlgError as exc:
        raise SolverError(f"ball Poincare eigensolve failed: {exc}", {"R": R, "d": d, "n": n}) from exc
    return float(values[0])


def spectrum_rows(result: SpectralResult) -> typing.List[list]:
    """CSV rows d, gamma, sigma, mode, index, eigenvalue, tail_diag."""
    problem = result.problem
    return [
        [problem.d, float(problem.gamma), float(problem.sigma), problem.mode_k, i, float(value), float(tail)]
        for i, (value, tail) in enumerate(zip(result.eigenvalues, result.eigenfunction_norm_tails))
    ]


SPECTRUM_HEADER = ["d", "gamma", "sigma", "mode", "index", "eigenvalue", "tail_diag"]


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
