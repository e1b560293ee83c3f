"""Lowest eigenpairs of the stencil operators, with certificates.

Dense symmetric eigendecomposition below DENSE_CAP unknowns (deterministic,
used by every acceptance-scale run); shift-inverted Lanczos above it, with
full reorthogonalization and residual verification against the same
tolerance.  Eigenvectors are normalized in the grid inner product, signs are
fixed (first significant component positive) and near-degenerate clusters
are re-orthonormalized so downstream tensors are reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .grid import Grid, GridFunction
from .operator import CoefficientField, DiscreteOperator

DENSE_CAP = 5000
DEFAULT_TOL = 1e-9
CLUSTER_REL_GAP = 1e-8
ORTHO_TOL = 1e-10


class EigensolveError(RuntimeError):
    """Iterative solve failed to certify; carries the best residual seen."""

    def __init__(self, message, best_residual=None):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Ordered eigenpairs of a discrete operator.

    vectors[:, k] is the k-th eigenfunction (ascending eigenvalues),
    orthonormal under the grid inner product, i.e. Euclidean norm
    quadrature_weight^(-1/2).  residuals[k] is the scaled certificate
    ||M phi - lambda phi|| / (||phi|| (1 + |lambda|)).
    """

    grid: Grid
    tag: str
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    @property
    def count(self) -> int:
        return int(self.eigenvalues.shape[0])

    def function(self, k: int) -> GridFunction:
        if not 0 <= k < self.count:
            raise IndexError(f"eigenfunction index {k} out of range [0, {self.count})")
        return GridFunction(self.grid, self.vectors[:, k])

    def gram_defect(self) -> float:
        """max |<phi_i, phi_j> - delta_ij| over the stored pairs."""
        gram = self.grid.quadrature_weight * (self.vectors.T @ self.vectors)
        return float(np.max(np.abs(gram - np.eye(self.count))))


def lowest_eigenpairs(
    op: DiscreteOperator,
    m: int,
    tol: float = DEFAULT_TOL,
    maxiter: int | None = None,
) -> SpectralBasis:
    """Compute the m lowest eigenpairs of a symmetric stencil operator."""
    G = op.size
    if not 1 <= m <= G:
        raise ValueError(f"m must satisfy 1 <= m <= {G}, got {m}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")

    if G <= DENSE_CAP:
        dense = op.matrix.toarray()
        lam, vec = sla.eigh(dense)
        lam = lam[:m]
        vec = np.ascontiguousarray(vec[:, :m])
    else:
        lam, vec = _iterative_lowest(op, m, tol, maxiter)

    w = op.grid.quadrature_weight
    vec = vec / np.sqrt(w * np.sum(vec * vec, axis=0))
    _reorthonormalize_clusters(lam, vec, w)
    _fix_signs(vec)

    resid = _scaled_residuals(op, lam, vec)
    if np.max(resid) > tol:
        raise EigensolveError(
            f"residual {np.max(resid):.3e} exceeds tolerance {tol:.3e}",
            best_residual=float(np.max(resid)),
        )

    basis = SpectralBasis(
        grid=op.grid,
        tag=op.kind,
        eigenvalues=np.asarray(lam, dtype=np.float64),
        vectors=vec,
        residuals=resid,
    )
    defect = basis.gram_defect()
    if defect > ORTHO_TOL:
        raise EigensolveError(f"orthonormality defect {defect:.3e} exceeds {ORTHO_TOL}")
    return basis


def _iterative_lowest(op, m, tol, maxiter):
    # PSD up to -v_sup, so a negative shift keeps the factorization safe
    try:
        lam, vec = spla.eigsh(
            op.matrix.tocsc(),
            k=m,
            sigma=-1.0,
            which="LM",
            tol=0,   # iterate to machine precision; certificates checked below
            maxiter=maxiter,
        )
    except spla.ArpackNoConvergence as exc:
        best = None
        if exc.eigenvalues is not None and len(exc.eigenvalues):
            vec = exc.eigenvectors
            lam = exc.eigenvalues
            R = op.matrix @ vec - vec * lam[None, :]
            scaled = np.sqrt(np.sum(R * R, axis=0)) / (
                np.sqrt(np.sum(vec * vec, axis=0)) * (1.0 + np.abs(lam))
            )
            best = float(np.min(scaled))
        raise EigensolveError(
            f"Lanczos failed to converge within the iteration budget: {exc}",
            best_residual=best,
        ) from exc
    order = np.argsort(lam, kind="stable")
    return lam[order], np.ascontiguousarray(vec[:, order])


def _scaled_residuals(op, lam, vec):
    R = op.matrix @ vec - vec * lam[None, :]
    num = np.sqrt(np.sum(R * R, axis=0))
    den = np.sqrt(np.sum(vec * vec, axis=0)) * (1.0 + np.abs(lam))
    return num / den


def degenerate_clusters(eigenvalues: np.ndarray, rel_gap: float = CLUSTER_REL_GAP):
    """Contiguous index groups whose eigenvalue gaps fall below rel_gap*(1+lam)."""
    clusters = []
    start = 0
    for k in range(1, len(eigenvalues)):
        if eigenvalues[k] - eigenvalues[k - 1] >= rel_gap * (1.0 + abs(eigenvalues[k])):
            clusters.append(list(range(start, k)))
            start = k
    clusters.append(list(range(start, len(eigenvalues))))
    return clusters


def _reorthonormalize_clusters(lam, vec, w):
    for cluster in degenerate_clusters(lam):
        if len(cluster) < 2:
            continue
        block = vec[:, cluster]
        q, _ = np.linalg.qr(block)
        vec[:, cluster] = q / np.sqrt(w)


def _fix_signs(vec):
    for k in range(vec.shape[1]):
        col = vec[:, k]
        idx = np.argmax(np.abs(col) > 1e-12 * np.max(np.abs(col)))
        if col[idx] < 0:
            vec[:, k] = -col


def rotate_cluster(basis: SpectralBasis, indices, rotation=None, seed=0) -> SpectralBasis:
    """Apply an orthogonal rotation inside one (degenerate) cluster.

    Used to probe that reported quantities depend only on eigenspaces, not
    on the solver's arbitrary choice of basis within a degenerate cluster.
    """
    indices = list(indices)
    size = len(indices)
    if rotation is None:
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        rotation = np.linalg.qr(rng.standard_normal((size, size)))[0]
    rotation = np.asarray(rotation)
    if rotation.shape != (size, size):
        raise ValueError(f"rotation must be {size}x{size}, got {rotation.shape}")
    if np.max(np.abs(rotation.T @ rotation - np.eye(size))) > 1e-12:
        raise ValueError("rotation matrix is not orthogonal")
    vec = basis.vectors.copy()
    vec[:, indices] = vec[:, indices] @ rotation
    return SpectralBasis(
        grid=basis.grid,
        tag=basis.tag,
        eigenvalues=basis.eigenvalues.copy(),
        vectors=vec,
        residuals=basis.residuals.copy(),
    )


def cluster_projector(basis: SpectralBasis, indices) -> np.ndarray:
    """Grid-orthogonal projector onto the span of the listed eigenvectors."""
    block = basis.vectors[:, list(indices)]
    return basis.grid.quadrature_weight * (block @ block.T)


@dataclass(frozen=True)
class WeylFit:
    exponent: float
    expected_exponent: float   # 2/d
    constant: float
    max_rel_dev: float


def weyl_fit(basis: SpectralBasis, d: int, k_min: int, k_max: int) -> WeylFit:
    """Least-squares fit of log lambda_k vs log k on [k_min, k_max] (1-based).

    Weyl's law predicts exponent 2/d; the constant is the fitted prefactor
    and max_rel_dev the worst relative deviation of lambda_k from the fit.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    if k_min < 4:
        raise ValueError(f"k_min must be >= 4 to stay clear of the ground state, got {k_min}")
    if k_max > basis.count:
        raise ValueError(f"k_max {k_max} exceeds basis count {basis.count}")
    if k_max - k_min + 1 < 8:
        raise ValueError("fit window must contain at least 8 points")
    k = np.arange(k_min, k_max + 1)
    lam = basis.eigenvalues[k_min - 1 : k_max]
    if np.any(lam <= 0):
        raise ValueError("nonpositive eigenvalue inside the fit window")
    slope, intercept = np.polyfit(np.log(k), np.log(lam), 1)
    fit = np.exp(intercept) * k**slope
    dev = float(np.max(np.abs(lam - fit) / fit))
    return WeylFit(
        exponent=float(slope),
        expected_exponent=2.0 / d,
        constant=float(np.exp(intercept)),
        max_rel_dev=dev,
    )


def sup_norms(basis: SpectralBasis, n: int):
    """Nodewise sup norm of each of the first n eigenfunctions, plus the max."""
    if not 1 <= n <= basis.count:
        raise ValueError(f"n must satisfy 1 <= n <= {basis.count}, got {n}")
    per_k = np.max(np.abs(basis.vectors[:, :n]), axis=0)
    return per_k, float(np.max(per_k))


def supnorm_growth_fit(basis: SpectralBasis, k_min: int, k_max: int) -> tuple[float, float]:
    """Fit ||phi_k||_inf ~ C lambda_k^alpha; returns (alpha, C).

    Diagnostic for the lambda^((d-1)/4) sup-norm growth bound; reported,
    not asserted, except that flat 2-D runs must stay under 0.35.
    """
    per_k, _ = sup_norms(basis, k_max)
    lam = basis.eigenvalues[k_min - 1 : k_max]
    sup = per_k[k_min - 1 : k_max]
    slope, intercept = np.polyfit(np.log(lam), np.log(sup), 1)
    return float(slope), float(np.exp(intercept))


@dataclass(frozen=True)
class ComparabilityReport:
    """Slack margins for a_min*mu_k - v_sup <= lambda_k <= a_max*mu_k + v_sup."""

    lower_margins: np.ndarray   # lambda_k - (a_min mu_k - v_sup)
    upper_margins: np.ndarray   # (a_max mu_k + v_sup) - lambda_k
    ok: bool
    worst: float


def comparability_check(
    basis_L: SpectralBasis,
    basis_lap: SpectralBasis,
    field: CoefficientField,
    k_max: int,
) -> ComparabilityReport:
    """Check the min-max eigenvalue sandwich between L and -Delta."""
    if basis_L.grid != basis_lap.grid:
        raise ValueError("bases live on different grids")
    if k_max > min(basis_L.count, basis_lap.count):
        raise ValueError(f"k_max {k_max} exceeds available eigenpairs")
    lam = basis_L.eigenvalues[:k_max]
    mu = basis_lap.eigenvalues[:k_max]
    lower = lam - (field.a_min * mu - field.v_sup)
    upper = (field.a_max * mu + field.v_sup) - lam
    tol = -1e-8 * (1.0 + np.abs(lam))
    ok = bool(np.all(lower >= tol) and np.all(upper >= tol))
    worst = float(min(np.min(lower), np.min(upper)))
    return ComparabilityReport(lower_margins=lower, upper_margins=upper, ok=ok, worst=worst)


def export_basis_csv(basis: SpectralBasis, path) -> None:
    """Portable CSV dump: header row of eigenvalues, one eigenvector per column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{v:.17g}" for v in basis.eigenvalues])
        for row in basis.vectors:
            writer.writerow([f"{v:.17g}" for v in row])
