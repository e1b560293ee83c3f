"""Flux-form finite-difference assembly of  -div(a grad u) + V u  on a Grid.

The diffusion coefficient is sampled at cell interfaces (never averaged from
nodes), so the row for node i reads, per axis,

    (a_{i+1/2} (u_i - u_{i+1}) + a_{i-1/2} (u_i - u_{i-1})) / h^2

with Dirichlet neighbours dropped (zero extension) or wrapped (periodic),
plus V_i u_i on the diagonal.  Assembling from faces makes the matrix
symmetric by construction and makes the ellipticity sandwich

    a_min <u, -Delta u>  <=  <u, L0 u>  <=  a_max <u, -Delta u>

an exact statement about the discrete quadratic forms, not an approximation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .grid import DIRICHLET, PERIODIC, Grid, GridFunction

CONSTANT = "constant"
HARMONIC = "harmonic"
RANDOM_FOURIER = "random_fourier"

SCHRODINGER = "schrodinger"
LAPLACIAN = "laplacian"


@dataclass(frozen=True)
class CoefficientSpec:
    """Recipe for the coefficient pair (a, V).

    kind=constant:        a = a0, V = v0.
    kind=harmonic:        a = a0, V(x) = v_scale * |x - center|^2.
    kind=random_fourier:  a = a0 + a_amplitude * S_a(x), V = v_amplitude * (S_v(x)+1)/2,
                          where S_a, S_v are random cosine series with frequency
                          cutoff `cutoff`, normalized so |S| <= 1 (hence
                          a in [a0 - a_amplitude, a0 + a_amplitude] and
                          V in [0, v_amplitude]).  Draws come from a Philox
                          counter-based generator keyed by `seed`, so fields
                          are platform-independent and smooth at all resolved
                          scales.
    """

    kind: str
    a0: float = 1.0
    v0: float = 0.0
    v_scale: float = 0.0
    seed: int = 0
    cutoff: int = 4
    a_amplitude: float = 0.0
    v_amplitude: float = 0.0

    def __post_init__(self):
        if self.kind not in (CONSTANT, HARMONIC, RANDOM_FOURIER):
            raise ValueError(f"unknown coefficient kind {self.kind!r}")
        if not self.a0 > 0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if self.kind == CONSTANT and self.v0 < 0:
            raise ValueError(f"v0 must be >= 0, got {self.v0}")
        if self.kind == HARMONIC and self.v_scale < 0:
            raise ValueError(f"v_scale must be >= 0, got {self.v_scale}")
        if self.kind == RANDOM_FOURIER:
            if not 0 <= self.a_amplitude < self.a0:
                raise ValueError(
                    f"a_amplitude must satisfy 0 <= amplitude < a0, got {self.a_amplitude}"
                )
            if self.v_amplitude < 0:
                raise ValueError(f"v_amplitude must be >= 0, got {self.v_amplitude}")
            if self.cutoff < 1:
                raise ValueError(f"cutoff must be >= 1, got {self.cutoff}")

    @classmethod
    def constant(cls, a0=1.0, v0=0.0):
        return cls(kind=CONSTANT, a0=a0, v0=v0)

    @classmethod
    def harmonic(cls, a0=1.0, v_scale=1.0):
        return cls(kind=HARMONIC, a0=a0, v_scale=v_scale)

    @classmethod
    def random_fourier(cls, seed, cutoff=4, a_amplitude=0.3, v_amplitude=0.0, a0=1.0):
        return cls(
            kind=RANDOM_FOURIER,
            a0=a0,
            seed=seed,
            cutoff=cutoff,
            a_amplitude=a_amplitude,
            v_amplitude=v_amplitude,
        )


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Sampled coefficients: a at cell interfaces, V at nodes, cached extrema."""

    grid: Grid
    a_face: tuple[np.ndarray, ...]   # one nd-array per axis, face axis extended
    v_node: np.ndarray               # flat, length G
    a_min: float
    a_max: float
    v_sup: float


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Symmetric sparse stencil operator on a grid.

    `kind` records what was assembled (schrodinger or laplacian) and is
    inherited by spectral bases.  `gershgorin_lower` is the smallest
    Gershgorin disc bound, a cheap certificate that the spectrum lies above
    it.
    """

    grid: Grid
    kind: str
    matrix: sp.csr_array
    gershgorin_lower: float

    @property
    def size(self) -> int:
        return self.grid.node_count

    def apply(self, f: GridFunction) -> GridFunction:
        if f.grid != self.grid:
            raise ValueError("operator and function live on different grids")
        return GridFunction(self.grid, self.matrix @ f.values)


def sample_coefficients(spec: CoefficientSpec, grid: Grid) -> CoefficientField:
    """Evaluate (a, V) on the grid; deterministic given (spec, grid)."""
    a_face = []
    for axis in range(grid.dimension):
        coords = _face_coordinates(grid, axis)
        a_face.append(_eval_a(spec, grid, coords))
    v_node = _eval_v(spec, grid, grid.nodes())

    a_min = min(float(f.min()) for f in a_face)
    a_max = max(float(f.max()) for f in a_face)
    if not a_min > 0:
        raise ValueError(f"sampled diffusion coefficient dips to {a_min} <= 0")
    v_sup = float(np.max(np.abs(v_node))) if v_node.size else 0.0
    return CoefficientField(
        grid=grid,
        a_face=tuple(a_face),
        v_node=v_node,
        a_min=a_min,
        a_max=a_max,
        v_sup=v_sup,
    )


def _face_coordinates(grid: Grid, axis: int) -> np.ndarray:
    """(F, d) coordinates of the faces normal to `axis`, flat order."""
    axes = [
        grid.axis_faces(a) if a == axis else grid.axis_nodes(a)
        for a in range(grid.dimension)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel(order="F") for m in mesh])


def _fourier_series(seed: int, cutoff: int, grid: Grid):
    """Two normalized random cosine series (for a and for V).

    Mode coefficients depend only on (seed, cutoff, dimension); returned
    closures evaluate Sum_k g_k prod_a cos(pi k_a x_a / L_a) / Sum|g|,
    which is bounded by 1 in absolute value.
    """
    d = grid.dimension
    modes = [
        k
        for k in np.ndindex(*([cutoff + 1] * d))
        if any(k)
    ]
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    g_a = rng.standard_normal(len(modes))
    g_v = rng.standard_normal(len(modes))
    # periodic grids need L-periodic fields so the wrap face sees one value
    freq = 2.0 * np.pi if grid.boundary == PERIODIC else np.pi

    def make(coeffs):
        scale = np.sum(np.abs(coeffs))

        def series(coords):
            out = np.zeros(coords.shape[0])
            for g, k in zip(coeffs, modes):
                term = np.ones(coords.shape[0])
                for a in range(d):
                    if k[a]:
                        term *= np.cos(freq * k[a] * coords[:, a] / grid.lengths[a])
                out += g * term
            return out / scale

        return series

    return make(g_a), make(g_v)


def _eval_a(spec: CoefficientSpec, grid: Grid, coords: np.ndarray) -> np.ndarray:
    if spec.kind in (CONSTANT, HARMONIC):
        return np.full(coords.shape[0], spec.a0)
    series_a, _ = _fourier_series(spec.seed, spec.cutoff, grid)
    a = spec.a0 + spec.a_amplitude * series_a(coords)
    # |series| <= 1 already; clip guards against roundoff at the bound
    return np.clip(a, spec.a0 - spec.a_amplitude, spec.a0 + spec.a_amplitude)


def _eval_v(spec: CoefficientSpec, grid: Grid, coords: np.ndarray) -> np.ndarray:
    if spec.kind == CONSTANT:
        return np.full(coords.shape[0], spec.v0)
    if spec.kind == HARMONIC:
        center = np.asarray(grid.lengths) / 2.0
        return spec.v_scale * np.sum((coords - center) ** 2, axis=1)
    _, series_v = _fourier_series(spec.seed, spec.cutoff, grid)
    v = spec.v_amplitude * (series_v(coords) + 1.0) / 2.0
    return np.clip(v, 0.0, spec.v_amplitude)


def assemble_schrodinger(field: CoefficientField, grid: Grid) -> DiscreteOperator:
    """Assemble L = -div(a grad) + V in flux form; exactly symmetric."""
    if field.grid != grid:
        raise ValueError("coefficient field sampled on a different grid")
    return _assemble(grid, field.a_face, field.v_node, SCHRODINGER)


def assemble_laplacian(grid: Grid) -> DiscreteOperator:
    """Assemble -Delta, i.e. the a=1, V=0 case of the flux form."""
    a_face = tuple(
        np.ones(_face_shape(grid, axis)) for axis in range(grid.dimension)
    )
    return _assemble(grid, a_face, np.zeros(grid.node_count), LAPLACIAN)


def _face_shape(grid: Grid, axis: int) -> tuple[int, ...]:
    shape = list(grid.points_per_axis)
    if grid.boundary == DIRICHLET:
        shape[axis] += 1
    return tuple(shape)


def _assemble(grid: Grid, a_face, v_node, kind) -> DiscreteOperator:
    G = grid.node_count
    shape = grid.points_per_axis
    node_id = np.arange(G).reshape(shape, order="F")

    diag = np.asarray(v_node, dtype=np.float64).copy()
    rows, cols, vals = [], [], []

    for axis in range(grid.dimension):
        h2 = grid.spacing[axis] ** 2
        a = np.asarray(a_face[axis], dtype=np.float64).reshape(
            _face_shape(grid, axis)
        )
        p = shape[axis]
        if grid.boundary == DIRICHLET:
            # interior faces j = 1..p-1 couple node j-1 to node j
            left = np.take(node_id, range(0, p - 1), axis=axis).ravel(order="F")
            right = np.take(node_id, range(1, p), axis=axis).ravel(order="F")
            af = np.take(a, range(1, p), axis=axis).ravel(order="F") / h2
            # boundary faces touch a single node (ghost value 0)
            lo = np.take(node_id, [0], axis=axis).ravel(order="F")
            hi = np.take(node_id, [p - 1], axis=axis).ravel(order="F")
            a_lo = np.take(a, [0], axis=axis).ravel(order="F") / h2
            a_hi = np.take(a, [p], axis=axis).ravel(order="F") / h2
            np.add.at(diag, lo, a_lo)
            np.add.at(diag, hi, a_hi)
        else:
            # p wrap-around faces; face j couples node (j-1) mod p to node j
            right = node_id.ravel(order="F")
            left = np.roll(node_id, 1, axis=axis).ravel(order="F")
            af = a.ravel(order="F") / h2

        np.add.at(diag, left, af)
        np.add.at(diag, right, af)
        rows.extend((left, right))
        cols.extend((right, left))
        vals.extend((-af, -af))

    rows.append(np.arange(G))
    cols.append(np.arange(G))
    vals.append(diag)

    mat = sp.coo_array(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(G, G),
    ).tocsr()
    mat.sum_duplicates()

    off = abs(mat - sp.diags_array(mat.diagonal()))
    gersh = float(np.min(mat.diagonal() - off.sum(axis=1)))
    return DiscreteOperator(grid=grid, kind=kind, matrix=mat, gershgorin_lower=gersh)


def gradient_energy(f: GridFunction, field: CoefficientField | None = None) -> float:
    """Discrete Dirichlet energy  sum_faces a_f (f_p - f_q)^2 / h^2 * weight.

    With field=None this is ||grad f||^2 (a = 1); with a field it is the
    a-weighted form <L0 f, f>.  Either way it reproduces the operator
    quadratic form exactly (summation by parts is an identity here).
    """
    grid = f.grid
    shape = grid.points_per_axis
    u = f.values.reshape(shape, order="F")
    total = 0.0
    for axis in range(grid.dimension):
        h2 = grid.spacing[axis] ** 2
        if field is None:
            a = np.ones(_face_shape(grid, axis))
        else:
            a = field.a_face[axis].reshape(_face_shape(grid, axis))
        p = shape[axis]
        if grid.boundary == DIRICHLET:
            diff = np.diff(u, axis=axis)
            a_int = np.take(a, range(1, p), axis=axis)
            total += float(np.sum(a_int * diff**2)) / h2
            lo = np.take(u, [0], axis=axis)
            hi = np.take(u, [p - 1], axis=axis)
            total += float(np.sum(np.take(a, [0], axis=axis) * lo**2)) / h2
            total += float(np.sum(np.take(a, [p], axis=axis) * hi**2)) / h2
        else:
            diff = u - np.roll(u, 1, axis=axis)
            total += float(np.sum(a * diff**2)) / h2
    return grid.quadrature_weight * total


def flat_dirichlet_eigenvalues(grid: Grid) -> np.ndarray:
    """Sorted closed-form spectrum of the flat (-Delta) Dirichlet stencil.

    Per axis the 1-D tridiagonal (-1, 2, -1)/h^2 has eigenvalues
    (4/h^2) sin^2(k pi h / (2 L)), k = 1..p; tensor sums give the rest.
    """
    if grid.boundary != DIRICHLET:
        raise ValueError("closed form implemented for Dirichlet grids only")
    per_axis = []
    for a in range(grid.dimension):
        p = grid.points_per_axis[a]
        h = grid.spacing[a]
        k = np.arange(1, p + 1)
        per_axis.append((4.0 / h**2) * np.sin(k * np.pi * h / (2.0 * grid.lengths[a])) ** 2)
    total = per_axis[0]
    for nxt in per_axis[1:]:
        total = (total[:, None] + nxt[None, :]).ravel()
    return np.sort(total)


def weyl_regime_cap(grid: Grid) -> int:
    """Largest eigenvalue index that stays clear of stencil saturation.

    Upper discrete eigenvalues flatten against the 4/h^2 ceiling and would
    corrupt spectral fits, so checks are restricted to tensor modes whose
    axis indices stay below points/4.  Returns the number of flat-grid
    eigenvalues strictly below the first eigenvalue that uses a mode
    index > points/4 on some axis.
    """
    if grid.boundary != DIRICHLET:
        # periodic modes saturate at the same per-axis quarter rule
        caps = [p // 4 for p in grid.points_per_axis]
        count = 1
        for c in caps:
            count *= max(2 * c - 1, 1)
        return count
    lam = []
    bad = np.inf
    per_axis = []
    for a in range(grid.dimension):
        p = grid.points_per_axis[a]
        h = grid.spacing[a]
        k = np.arange(1, p + 1)
        per_axis.append((4.0 / h**2) * np.sin(k * np.pi * h / (2.0 * grid.lengths[a])) ** 2)
    caps = [p // 4 for p in grid.points_per_axis]
    for mode in np.ndindex(*[min(p, 2 * c + 2) for p, c in zip(grid.points_per_axis, caps)]):
        lam_mode = sum(per_axis[a][mode[a]] for a in range(grid.dimension))
        if any(mode[a] + 1 > caps[a] for a in range(grid.dimension)):
            bad = min(bad, lam_mode)
        else:
            lam.append(lam_mode)
    return int(np.sum(np.asarray(lam) < bad))
