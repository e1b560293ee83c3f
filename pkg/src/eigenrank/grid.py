"""Uniform tensor grids on boxes and the discrete L2 inner product.

Everything downstream works with flat arrays of node values.  Nodes are
ordered lexicographically with axis 0 varying fastest, so the flat index of
the multi-index (i0, i1, i2) is i0 + p0*i1 + p0*p1*i2.  The quadrature is
the midpoint rule with the single weight h0*h1*...*h_{d-1} at every node;
Dirichlet functions vanish on the boundary, so no boundary correction is
needed and the discrete eigenvectors of the stencil operators stay exactly
orthonormal under this inner product.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DIRICHLET = "dirichlet"
PERIODIC = "periodic"

MIN_POINTS = 8


@dataclass(frozen=True)
class Grid:
    """Discretized box [0,L0] x ... with uniform spacing per axis.

    For Dirichlet boundaries only interior nodes are stored and
    spacing = length/(points+1); for periodic boundaries all points
    are stored and spacing = length/points.
    """

    dimension: int
    lengths: tuple[float, ...]
    points_per_axis: tuple[int, ...]
    boundary: str
    spacing: tuple[float, ...]
    quadrature_weight: float

    @property
    def node_count(self) -> int:
        n = 1
        for p in self.points_per_axis:
            n *= p
        return n

    def axis_nodes(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis."""
        p = self.points_per_axis[axis]
        h = self.spacing[axis]
        if self.boundary == DIRICHLET:
            return h * np.arange(1, p + 1)
        return h * np.arange(p)

    def axis_faces(self, axis: int) -> np.ndarray:
        """Coordinates of cell interfaces along one axis.

        Dirichlet: p+1 faces, face j sits between node j-1 and node j
        (ghost nodes at the boundary).  Periodic: p faces, face j sits
        between node (j-1) mod p and node j.
        """
        p = self.points_per_axis[axis]
        h = self.spacing[axis]
        if self.boundary == DIRICHLET:
            return h * (np.arange(p + 1) + 0.5)
        return h * (np.arange(p) - 0.5)

    def nodes(self) -> np.ndarray:
        """All node coordinates as a (G, d) array in flat-index order."""
        axes = [self.axis_nodes(a) for a in range(self.dimension)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel(order="F") for m in mesh])


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real-valued function sampled at the nodes of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.shape[0] != self.grid.node_count:
            raise ValueError(
                f"values must have length {self.grid.node_count}, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)


def make_grid(dimension, lengths, points, boundary=DIRICHLET) -> Grid:
    """Build a grid, validating dimension, lengths and resolution.

    `lengths` and `points` may be scalars (broadcast to every axis) or
    per-axis sequences.
    """
    if dimension not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {dimension}")
    if boundary not in (DIRICHLET, PERIODIC):
        raise ValueError(f"boundary must be '{DIRICHLET}' or '{PERIODIC}', got {boundary!r}")

    lengths_t = _per_axis(lengths, dimension, float, "lengths")
    points_t = _per_axis(points, dimension, int, "points")

    for L in lengths_t:
        if not L > 0:
            raise ValueError(f"lengths must be positive, got {lengths_t}")
    for p in points_t:
        if p < MIN_POINTS:
            raise ValueError(
                f"points must be >= {MIN_POINTS} per axis (too coarse below that), got {points_t}"
            )

    if boundary == DIRICHLET:
        spacing = tuple(L / (p + 1) for L, p in zip(lengths_t, points_t))
    else:
        spacing = tuple(L / p for L, p in zip(lengths_t, points_t))
    weight = 1.0
    for h in spacing:
        weight *= h

    return Grid(
        dimension=dimension,
        lengths=lengths_t,
        points_per_axis=points_t,
        boundary=boundary,
        spacing=spacing,
        quadrature_weight=weight,
    )


def _per_axis(value, d, cast, name):
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(d))
    items = tuple(cast(v) for v in value)
    if len(items) != d:
        raise ValueError(f"{name} must have {d} entries, got {len(items)}")
    return items


def inner(f: GridFunction, g: GridFunction) -> float:
    """Discrete L2 pairing: quadrature_weight * sum_nodes f*g."""
    if f.grid != g.grid:
        raise ValueError("inner() requires both functions on the same grid")
    return f.grid.quadrature_weight * float(np.dot(f.values, g.values))


def norm_l2(f: GridFunction) -> float:
    return float(np.sqrt(inner(f, f)))
