"""Pointwise products of eigenfunctions and their spectral expansions.

The central object is the tensor c[i,j,k] = <phi_i phi_j, psi_k> with
(phi) a source basis and (psi) a target basis (same operator for the L2
theory, the plain Laplacian for the H^-1 theory).  Pairs are stored once
(i <= j); the tensor is dense because generic potentials leave it without
exploitable sparsity.  All contractions go through GEMM so the reduction
order per coefficient is fixed regardless of thread count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridFunction
from .operator import CoefficientField
from .eigensolve import SpectralBasis, sup_norms


def pair_list(n: int) -> list[tuple[int, int]]:
    """Upper-triangle pairs (i, j), i <= j < n, lexicographic."""
    return [(i, j) for i in range(n) for j in range(i, n)]


def pair_row(i: int, j: int, n: int) -> int:
    """Row of pair (i, j) in the pair_list(n) ordering."""
    if i > j:
        i, j = j, i
    if not 0 <= i <= j < n:
        raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
    return i * n - (i * (i - 1)) // 2 + (j - i)


@dataclass(frozen=True, eq=False)
class ProductCoefficients:
    """Expansion coefficients of all products phi_i phi_j, i <= j < n.

    coeffs[p, k] = <phi_i phi_j, psi_k> for pair p = pair_row(i, j, n) and
    target index k < m.  product_l2_norms[p] = ||phi_i phi_j||_L2.
    """

    n: int
    m: int
    target: str
    coeffs: np.ndarray
    product_l2_norms: np.ndarray

    def row(self, i: int, j: int) -> np.ndarray:
        return self.coeffs[pair_row(i, j, self.n)]

    def restrict(self, n: int) -> "ProductCoefficients":
        """Coefficients of the sub-family with both indices below n."""
        if not 1 <= n <= self.n:
            raise ValueError(f"n must satisfy 1 <= n <= {self.n}, got {n}")
        rows = [pair_row(i, j, self.n) for i, j in pair_list(n)]
        return ProductCoefficients(
            n=n,
            m=self.m,
            target=self.target,
            coeffs=self.coeffs[rows],
            product_l2_norms=self.product_l2_norms[rows],
        )


def product_function(i: int, j: int, basis: SpectralBasis) -> GridFunction:
    """Nodewise product phi_i * phi_j."""
    if not (0 <= i < basis.count and 0 <= j < basis.count):
        raise IndexError(f"indices ({i}, {j}) out of range for basis of size {basis.count}")
    return GridFunction(basis.grid, basis.vectors[:, i] * basis.vectors[:, j])


def product_matrix(basis: SpectralBasis, n: int, ordered: bool = False) -> np.ndarray:
    """Stack of product node values, one product per column.

    ordered=False gives the n(n+1)/2 distinct pairs i <= j; ordered=True
    duplicates off-diagonal pairs so the column family transforms
    orthogonally under rotations inside degenerate clusters.
    """
    if not 1 <= n <= basis.count:
        raise ValueError(f"n must satisfy 1 <= n <= {basis.count}, got {n}")
    V = basis.vectors[:, :n]
    if ordered:
        cols = [V[:, i] * V[:, j] for i in range(n) for j in range(n)]
    else:
        cols = [V[:, i] * V[:, j] for i, j in pair_list(n)]
    return np.column_stack(cols)


def expansion_coefficients(
    basis_src: SpectralBasis,
    basis_target: SpectralBasis,
    n: int,
    m: int,
) -> ProductCoefficients:
    """c[i,j,k] = <phi_i phi_j, psi_k> for i <= j < n, k < m."""
    if basis_src.grid != basis_target.grid:
        raise ValueError("source and target bases live on different grids")
    if not 1 <= n <= basis_src.count:
        raise ValueError(f"n must satisfy 1 <= n <= {basis_src.count}, got {n}")
    if not 1 <= m <= basis_target.count:
        raise ValueError(f"m must satisfy 1 <= m <= {basis_target.count}, got {m}")
    w = basis_src.grid.quadrature_weight
    prods = product_matrix(basis_src, n)                    # (G, pairs)
    coeffs = w * (prods.T @ basis_target.vectors[:, :m])    # (pairs, m)
    norms = np.sqrt(w * np.sum(prods * prods, axis=0))
    return ProductCoefficients(
        n=n,
        m=m,
        target=basis_target.tag,
        coeffs=coeffs,
        product_l2_norms=norms,
    )


def quadratic_form_value(
    i: int,
    j: int,
    coeffs: ProductCoefficients,
    basis_target: SpectralBasis,
) -> float:
    """Sum_k lambda_k c[i,j,k]^2, the spectral form <M(phi_i phi_j), phi_i phi_j>.

    With a schrodinger target this is the quantity bounded by the traced
    product-rule chain; with a laplacian target it equals the squared
    gradient norm of the product (complete expansion assumed for equality).
    """
    if basis_target.tag != coeffs.target:
        raise ValueError(
            f"target tag mismatch: coefficients are {coeffs.target!r}, "
            f"basis is {basis_target.tag!r}"
        )
    if basis_target.count < coeffs.m:
        raise ValueError("basis provides fewer eigenvalues than stored coefficients")
    c = coeffs.row(i, j)
    lam = basis_target.eigenvalues[: coeffs.m]
    return float(np.dot(lam, c * c))


@dataclass(frozen=True, eq=False)
class QuadraticChainReport:
    """Per-pair values and the fully traced upper bound for the key estimate

        <L(phi_i phi_j), phi_i phi_j>  <=  v_sup S^2 + a_max (2 sqrt((lambda_n + v_sup)/a_min) S)^2

    with S = max_{i<n} ||phi_i||_inf.  Every constant in the chain is carried
    explicitly so a failure pinpoints which step broke.
    """

    n: int
    values: np.ndarray       # (pairs,) quadratic form values
    bound: float
    max_sup: float
    ok: bool


def quadratic_chain_report(
    coeffs: ProductCoefficients,
    basis_L: SpectralBasis,
    field: CoefficientField,
    n: int | None = None,
) -> QuadraticChainReport:
    """Evaluate the traced bound for every pair i <= j < n."""
    if coeffs.target != "schrodinger":
        raise ValueError("chain bound applies to schrodinger-target coefficients")
    n = coeffs.n if n is None else n
    sub = coeffs if n == coeffs.n else coeffs.restrict(n)
    lam_n = basis_L.eigenvalues[n - 1]
    _, S = sup_norms(basis_L, n)
    grad_bound = 2.0 * np.sqrt((lam_n + field.v_sup) / field.a_min) * S
    bound = field.v_sup * S**2 + field.a_max * grad_bound**2
    lam = basis_L.eigenvalues[: sub.m]
    values = (sub.coeffs**2) @ lam
    ok = bool(np.all(values <= bound * (1.0 + 1e-12) + 1e-12))
    return QuadraticChainReport(n=n, values=values, bound=float(bound), max_sup=S, ok=ok)


def export_coefficients_csv(coeffs: ProductCoefficients, path) -> None:
    """Tensor dump as rows (i, j, k, c) with 1-based indices."""
    n = coeffs.n
    with open(path, "w", newline="") as fh:
        fh.write("i,j,k,c\n")
        for (i, j) in pair_list(n):
            row = coeffs.coeffs[pair_row(i, j, n)]
            for k in range(coeffs.m):
                fh.write(f"{i + 1},{j + 1},{k + 1},{row[k]:.17g}\n")
