#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Grids, quadrature and weighted norms.

Two discretizations live here:

* ``RadialGrid``: finite-volume cells [f_i, f_{i+1}] of the radial half line,
  with the surface factor |S^{d-1}| folded into the cell weights, so that
  ``sum(weights)`` is exactly the volume of the ball of radius ``r_max``.
* ``PhaseGrid``: a uniform tensor grid on [-X_max, X_max] x [-V_max, V_max]
  with trapezoid weights in both directions.

Grids and fields are immutable after construction and can be shared by
parallel sweep workers.
"""

import logging
import math
import typing
from dataclasses import dataclass, field

import numpy as np

from weak_confinement.errors import DomainError

logger = logging.getLogger(__name__)


def sphere_area(d: int) -> float:
    """
    Surface measure |S^{d-1}| of the unit sphere in R^d.

    Examples
    --------
    >>> round(sphere_area(3), 12) == round(4 * math.pi, 12)
    True
    >>> sphere_area(1)
    2.0
    """
    if d < 1:
        raise DomainError(f"d must be at least 1, got {d}")
    return float(2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0))


def ball_volume(d: int, radius: float) -> float:
    """Volume of the ball of given radius in R^d."""
    return sphere_area(d) * radius ** d / d


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """
    Radial quadrature grid in dimension ``d``.

    Attributes
    ----------
    d : int
        Space dimension, at least 1.
    nodes : np.ndarray
        Strictly increasing nodes r_0 < ... < r_{N-1}, r_0 >= 0.
    weights : np.ndarray
        Positive weights approximating the integral of phi(r) r^{d-1} dr
        times |S^{d-1}|.
    faces : np.ndarray or None
        Cell faces f_0 = 0 < f_1 < ... < f_N = r_max. Grids built by
        ``geometric_radial_grid`` and ``uniform_radial_grid`` carry faces;
        the finite-volume solvers require them.
    """

    d: int
    nodes: np.ndarray
    weights: np.ndarray
    faces: typing.Optional[np.ndarray] = None

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f"d must be at least 1, got {self.d}")
        nodes = _frozen(self.nodes)
        weights = _frozen(self.weights)
        if nodes.ndim != 1 or nodes.shape != weights.shape:
            raise DomainError("nodes and weights must be 1-d arrays of equal length")
        if nodes.size < 2:
            raise DomainError(f"a radial grid needs at least 2 nodes, got {nodes.size}")
        if nodes[0] < 0 or np.any(np.diff(nodes) <= 0):
            raise DomainError("nodes must be nonnegative and strictly increasing")
        if np.any(weights <= 0) or not np.all(np.isfinite(weights)):
            raise DomainError("all quadrature weights must be positive and finite")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if self.faces is not None:
            faces = _frozen(self.faces)
            if faces.size != nodes.size + 1 or faces[0] != 0.0 or np.any(np.diff(faces) <= 0):
                raise DomainError("faces must start at 0, increase strictly and bracket every node")
            object.__setattr__(self, "faces", faces)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def r_max(self) -> float:
        return float(self.faces[-1]) if self.faces is not None else float(self.nodes[-1])

    def face_areas(self) -> np.ndarray:
        """|S^{d-1}| f^{d-1} at every face (the origin face has area 0 for d > 1)."""
        self.require_faces()
        areas = sphere_area(self.d) * self.faces ** (self.d - 1)
        areas[0] = 0.0
        return areas

    def require_faces(self):
        if self.faces is None:
            raise DomainError("this operation needs a finite-volume grid with cell faces")

    def scaled(self, factor: float) -> "RadialGrid":
        """The same grid dilated by ``factor`` (faces, nodes and weights rescaled)."""
        if factor <= 0:
            raise DomainError(f"factor must be positive, got {factor}")
        faces = None if self.faces is None else self.faces * factor
        return RadialGrid(self.d, self.nodes * factor, self.weights * factor ** self.d, faces)


def radial_grid_from_faces(d: int, faces) -> RadialGrid:
    """
    Finite-volume grid from cell faces.

    Weights are the exact cell volumes |S^{d-1}| (f_{i+1}^d - f_i^d) / d and
    nodes sit at the r^{d-1}-weighted centroid of each cell, so affine
    functions of r integrate exactly.
    """
    faces = np.asarray(faces, dtype=float)
    lo, hi = faces[:-1], faces[1:]
    weights = sphere_area(d) * (hi ** d - lo ** d) / d
    nodes = (d / (d + 1.0)) * (hi ** (d + 1) - lo ** (d + 1)) / (hi ** d - lo ** d)
    return RadialGrid(d=d, nodes=nodes, weights=weights, faces=faces)


def uniform_radial_grid(d: int, r_max: float, n: int) -> RadialGrid:
    """
    Grid of ``n`` equal cells on [0, r_max].

    Examples
    --------
    >>> grid = uniform_radial_grid(3, 1.0, 100)
    >>> abs(grid.weights.sum() - 4 * math.pi / 3) < 1e-12
    True
    """
    if r_max <= 0:
        raise DomainError(f"r_max must be positive, got {r_max}")
    if n < 2:
        raise DomainError(f"n must be at least 2, got {n}")
    return radial_grid_from_faces(d, np.linspace(0.0, r_max, n + 1))


def geometric_radial_grid(
    d: int,
    r_max: float,
    n: int,
    r_inner: float = 1e-4,
    r_blend: float = 1.0,
) -> RadialGrid:
    """
    Log-spaced cells near the origin blended into uniform cells.

    Faces are 0, then geometric from ``r_inner`` up to ``r_blend``, then
    uniform up to ``r_max``. The geometric ratio is chosen so that the last
    geometric cell has the width of the uniform cells. The cell count is
    close to ``n`` (it is rounded so that both parts fit exactly).

    Parameters
    ----------
    d : int
        Dimension.
    r_max : float
        Outer radius, larger than ``r_blend``.
    n : int
        Requested number of cells.
    r_inner : float
        First nonzero face.
    r_blend : float
        Radius where the layout switches from geometric to uniform.

    Returns
    -------
    RadialGrid
    """
    if not 0 < r_inner < r_blend < r_max:
        raise DomainError(
            f"need 0 < r_inner < r_blend < r_max, got {r_inner}, {r_blend}, {r_max}"
        )
    if n < 8:
        raise DomainError(f"n must be at least 8, got {n}")
    log_span = math.log(r_blend / r_inner)
    spacing = (r_max - r_blend + r_blend * log_span) / (n - 1)
    n_uniform = max(1, int(round((r_max - r_blend) / spacing)))
    spacing = (r_max - r_blend) / n_uniform
    ratio = 1.0 / (1.0 - min(spacing / r_blend, 0.5))
    n_geometric = max(1, int(math.ceil(log_span / math.log(ratio))))
    geometric = r_inner * (r_blend / r_inner) ** (np.arange(n_geometric + 1) / n_geometric)
    uniform = np.linspace(r_blend, r_max, n_uniform + 1)[1:]
    faces = np.concatenate([[0.0], geometric, uniform])
    logger.debug(
        "geometric radial grid: d=%d r_max=%g cells=%d (geometric %d, uniform %d)",
        d, r_max, faces.size - 1, n_geometric + 1, n_uniform,
    )
    return radial_grid_from_faces(d, faces)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Values of a radial function at the nodes of a ``RadialGrid``."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.nodes.shape:
            raise DomainError(
                f"expected {self.grid.size} values, got array of shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise DomainError(f"field is not finite at node {bad} (r={self.grid.nodes[bad]:.6g})")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: RadialGrid, func) -> "RadialField":
        return cls(grid, func(grid.nodes))

    def check_density(self):
        """Raise DomainError unless all values are nonnegative."""
        if np.any(self.values < 0):
            bad = int(np.argmin(self.values))
            raise DomainError(
                f"density is negative at node {bad} (value {self.values[bad]:.3e})"
            )

    def with_values(self, values) -> "RadialField":
        return RadialField(self.grid, values)


def _weight_at(grid: RadialGrid, weight) -> np.ndarray:
    """
    Evaluate a weight function at the nodes, applying the origin rule.

    A weight that is not finite at a node located exactly at r = 0 gives that
    node zero quadrature weight; anywhere else it is a domain error.
    """
    if weight is None:
        return np.ones(grid.size)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        values = np.broadcast_to(np.asarray(weight(grid.nodes), dtype=float), grid.nodes.shape).copy()
    bad = ~np.isfinite(values)
    at_origin = grid.nodes == 0.0
    if np.any(bad & ~at_origin):
        node = int(np.flatnonzero(bad & ~at_origin)[0])
        raise DomainError(
            f"weight is not finite at node {node} (r={grid.nodes[node]:.6g})"
        )
    values[bad & at_origin] = 0.0
    return values


def radial_integral(field: RadialField, weight=None) -> float:
    """Quadrature of weight(r) * values over R^d."""
    return float(np.sum(field.grid.weights * _weight_at(field.grid, weight) * field.values))


def weighted_norm_sq(field: RadialField, weight=None) -> float:
    """
    Weighted squared L2 norm: sum_i w_i * weight(r_i) * values_i^2.

    Parameters
    ----------
    field : RadialField
        The field to measure.
    weight : callable or None
        Vectorized function of r; ``None`` means weight 1.

    Returns
    -------
    float
        A nonnegative number (for nonnegative weights).

    Examples
    --------
    >>> grid = uniform_radial_grid(3, 1.0, 64)
    >>> ones = RadialField(grid, np.ones(grid.size))
    >>> abs(weighted_norm_sq(ones) - 4 * math.pi / 3) < 1e-12
    True
    """
    return float(
        np.sum(field.grid.weights * _weight_at(field.grid, weight) * field.values ** 2)
    )


def gradient_energy(field: RadialField, weight=None) -> float:
    """
    Finite-volume approximation of the integral of weight(r) |u'(r)|^2 over R^d.

    Differences across interior faces are weighted by the face area and by
    ``weight`` evaluated at the face.
    """
    grid = field.grid
    grid.require_faces()
    inner = grid.faces[1:-1]
    areas = grid.face_areas()[1:-1]
    face_weight = np.ones_like(inner) if weight is None else np.asarray(weight(inner), dtype=float)
    jumps = np.diff(field.values)
    return float(np.sum(areas * face_weight * jumps ** 2 / np.diff(grid.nodes)))


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """
    Uniform grid in (x, v) for the one-dimensional kinetic equation.

    Attributes
    ----------
    x_max, v_max : float
        Half-widths of the box. ``v_max`` must be at least 6 so that the
        truncated Gaussian misses at most ~1e-8 of its mass.
    nx, nv : int
        Node counts, at least 8 each.
    """

    x_max: float
    v_max: float
    nx: int
    nv: int
    x: np.ndarray = field(init=False, repr=False)
    v: np.ndarray = field(init=False, repr=False)
    wx: np.ndarray = field(init=False, repr=False)
    wv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.nx < 8 or self.nv < 8:
            raise DomainError(f"node counts must be at least 8, got nx={self.nx}, nv={self.nv}")
        if self.x_max <= 0:
            raise DomainError(f"x_max must be positive, got {self.x_max}")
        if self.v_max < 6:
            raise DomainError(f"v_max must be at least 6, got {self.v_max}")
        x = np.linspace(-self.x_max, self.x_max, self.nx)
        v = np.linspace(-self.v_max, self.v_max, self.nv)
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "v", _frozen(v))
        object.__setattr__(self, "wx", _frozen(_trapezoid_weights(self.nx, self.dx)))
        object.__setattr__(self, "wv", _frozen(_trapezoid_weights(self.nv, self.dv)))

    @property
    def dx(self) -> float:
        return 2.0 * self.x_max / (self.nx - 1)

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / (self.nv - 1)

    @property
    def shape(self) -> typing.Tuple[int, int]:
        return (self.nx, self.nv)

    def cell_volumes(self) -> np.ndarray:
        return np.outer(self.wx, self.wv)


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return weights


@dataclass(frozen=True, eq=False)
class PhaseField:
    """Values f_ij = f(x_i, v_j) on a ``PhaseGrid``."""

    grid: PhaseGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != self.grid.shape:
            raise DomainError(f"expected shape {self.grid.shape}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            i, j = np.argwhere(~np.isfinite(values))[0]
            raise DomainError(f"phase field is not finite at node ({i}, {j})")
        object.__setattr__(self, "values", values)

    def check_density(self):
        if np.any(self.values < 0):
            i, j = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
            raise DomainError(f"density is negative at node ({i}, {j})")

    def with_values(self, values) -> "PhaseField":
        return PhaseField(self.grid, values)


def phase_integral(field: PhaseField, weight=None) -> float:
    """
    Trapezoid-rule double integral of weight(x, v) * f.

    ``weight`` is called as ``weight(x[:, None], v[None, :])`` and must
    broadcast to the grid shape.

    Examples
    --------
    >>> grid = PhaseGrid(x_max=10.0, v_max=8.0, nx=201, nv=161)
    >>> f = np.exp(-grid.x[:, None] ** 2 / 2) * np.exp(-grid.v[None, :] ** 2 / 2)
    >>> abs(phase_integral(PhaseField(grid, f)) - 2 * math.pi) < 1e-6
    True
    """
    grid = field.grid
    if weight is None:
        values = field.values
    else:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            w = np.broadcast_to(weight(grid.x[:, None], grid.v[None, :]), grid.shape)
        if not np.all(np.isfinite(w)):
            i, j = np.argwhere(~np.isfinite(w))[0]
            raise DomainError(f"weight is not finite at node ({i}, {j})")
        values = w * field.values
    return float(grid.wx @ values @ grid.wv)


if __name__ == "__main__":
    import pytest

    pytest.main(args=[".", "--doctest-modules", "-v"])
