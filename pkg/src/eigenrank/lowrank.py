"""Projection tails, spectral cutoffs and the SVD optimality oracle.

For a family of products the quantities of interest are the tails

    tail_l2(i, j, r)  = sqrt(sum_{k>r} c[i,j,k]^2)
    tail_hm1(i, j, r) = sqrt(sum_{k>r} c[i,j,k]^2 / mu_k)

(the latter against the Laplacian basis, dropping the constant mode on
periodic grids), together with three notions of rank at accuracy eps:

    r_predicted the cutoff ceil(calib (S/eps)^d n)        [L2]
                or ceil(calib (S/eps)^(d/2) sqrt(n))      [H^-1]
    r_empirical the smallest r whose worst-pair tail is <= eps
    r_oracle    the smallest SVD subspace dimension leaving every
                product with residual <= eps

The implicit constants hidden in the asymptotic statements are exposed as a
single calibration constant per formula; `calibrate_cutoff` measures the
smallest sufficient value on a given configuration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import PERIODIC
from .eigensolve import SpectralBasis
from .products import ProductCoefficients, pair_list, pair_row, product_matrix

L2 = "l2"
HM1 = "hm1"
NULL_MODE_REL_TOL = 1e-10
ORACLE_ENTRY_CAP = 100_000_000


def null_mode_mask(basis_lap: SpectralBasis) -> np.ndarray:
    """True for eigenvalues treated as the (excluded) constant mode.

    Periodic Laplacians have an exact zero mode which the mean-subtracted
    H^-1 norm removes; Dirichlet spectra are strictly positive and keep
    every mode.
    """
    mu = basis_lap.eigenvalues
    if basis_lap.grid.boundary == PERIODIC:
        return np.abs(mu) <= NULL_MODE_REL_TOL * (1.0 + float(np.max(np.abs(mu))))
    return np.zeros(mu.shape, dtype=bool)


def _check_laplacian_target(coeffs: ProductCoefficients, basis_lap: SpectralBasis):
    if coeffs.target != "laplacian":
        raise ValueError(f"H^-1 tails need laplacian-target coefficients, got {coeffs.target!r}")
    if basis_lap.tag != "laplacian":
        raise ValueError(f"expected a laplacian basis, got tag {basis_lap.tag!r}")
    if basis_lap.count < coeffs.m:
        raise ValueError("basis provides fewer eigenvalues than stored coefficients")
    mu = basis_lap.eigenvalues[: coeffs.m]
    mask = null_mode_mask(basis_lap)[: coeffs.m]
    if np.any(mu[~mask] <= 0):
        raise ValueError("nonpositive Laplacian eigenvalue outside the excluded constant mode")
    return mu, mask


def tail_l2(coeffs: ProductCoefficients, i: int, j: int, r: int) -> float:
    """L2 norm of the projection of phi_i phi_j beyond the first r targets."""
    if not 0 <= r <= coeffs.m:
        raise ValueError(f"r must satisfy 0 <= r <= {coeffs.m}, got {r}")
    c = coeffs.row(i, j)
    return float(np.sqrt(np.sum(c[r:] ** 2)))


def tail_hm1(
    coeffs: ProductCoefficients,
    basis_lap: SpectralBasis,
    i: int,
    j: int,
    r: int,
) -> float:
    """H^-1 norm of the projection beyond the first r Laplacian modes."""
    if not 0 <= r <= coeffs.m:
        raise ValueError(f"r must satisfy 0 <= r <= {coeffs.m}, got {r}")
    weights = hm1_weights(coeffs, basis_lap)
    c = coeffs.row(i, j)
    return float(np.sqrt(np.sum((c[r:] ** 2) * weights[r:])))


def tail_table(coeffs: ProductCoefficients, weights: np.ndarray | None = None) -> np.ndarray:
    """T[p, r] = tail of pair p after r modes, for every r = 0..m at once.

    `weights` (optional, length m) turns the L2 table into the H^-1 table.
    Computed by reverse cumulative sums, so one pass serves every r.
    """
    sq = coeffs.coeffs**2
    if weights is not None:
        sq = sq * weights[None, :]
    rev = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1]
    table = np.zeros((sq.shape[0], coeffs.m + 1))
    table[:, : coeffs.m] = rev
    return np.sqrt(np.maximum(table, 0.0))


def hm1_weights(coeffs: ProductCoefficients, basis_lap: SpectralBasis) -> np.ndarray:
    mu, mask = _check_laplacian_target(coeffs, basis_lap)
    return np.where(mask, 0.0, 1.0 / np.where(mask, 1.0, mu))


def max_tail_curve(coeffs: ProductCoefficients, weights=None) -> np.ndarray:
    """Worst-pair tail as a function of r (length m+1 vector)."""
    return np.max(tail_table(coeffs, weights), axis=0)


def empirical_rank(max_tails: np.ndarray, eps: float) -> int:
    """Smallest r with worst-pair tail <= eps; len(max_tails)-1 if none."""
    hits = np.nonzero(max_tails <= eps)[0]
    return int(hits[0]) if hits.size else int(len(max_tails) - 1)


def cutoff_l2(eps: float, n: int, max_sup: float, d: int, calib: float = 1.0) -> int:
    """Rank prescribed by the L2 low-rank bound: ceil(calib (S/eps)^d n)."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not calib > 0:
        raise ValueError(f"calib must be positive, got {calib}")
    return max(1, math.ceil(calib * (max_sup / eps) ** d * n))


def cutoff_hm1(eps: float, n: int, max_sup: float, d: int, calib: float = 1.0) -> int:
    """Rank prescribed by the H^-1 bound: ceil(calib (S/eps)^(d/2) sqrt(n))."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if not calib > 0:
        raise ValueError(f"calib must be positive, got {calib}")
    return max(1, math.ceil(calib * (max_sup / eps) ** (d / 2.0) * math.sqrt(n)))


def calibrate_cutoff(
    max_tails: np.ndarray,
    eps_list,
    n: int,
    max_sup: float,
    d: int,
    norm: str,
) -> float:
    """Smallest calibration constant making the cutoff sufficient.

    Returns max over eps of r_empirical / (formula with calib = 1); feeding
    the result back into the cutoff guarantees worst-pair tails <= eps for
    every eps in the list.
    """
    worst = 0.0
    for eps in eps_list:
        r_emp = empirical_rank(max_tails, eps)
        if norm == L2:
            base = (max_sup / eps) ** d * n
        elif norm == HM1:
            base = (max_sup / eps) ** (d / 2.0) * math.sqrt(n)
        else:
            raise ValueError(f"unknown norm {norm!r}")
        worst = max(worst, r_emp / base)
    return worst


def oracle_rank(
    basis_src: SpectralBasis,
    n: int,
    eps: float,
    norm: str = L2,
    basis_lap: SpectralBasis | None = None,
    coeffs: ProductCoefficients | None = None,
    entry_cap: int = ORACLE_ENTRY_CAP,
) -> int:
    """Smallest subspace dimension leaving every product residual <= eps.

    The candidate subspaces are spans of left singular vectors of the
    product family; the per-column acceptance criterion mirrors the
    "for all i, j <= n" quantifier of the rank bounds.  Columns enumerate
    ordered pairs (duplicating i != j), which makes the singular values
    invariant under rotations inside degenerate clusters.

    L2: columns are sqrt(weight)-scaled node values of phi_i phi_j.
    H^-1: columns are Laplacian-basis coefficient vectors scaled 1/sqrt(mu).
    """
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if norm == L2:
        G = basis_src.grid.node_count
        if G * n * n > entry_cap:
            raise MemoryError(
                f"oracle matrix would hold {G * n * n} entries (cap {entry_cap})"
            )
        A = math.sqrt(basis_src.grid.quadrature_weight) * product_matrix(
            basis_src, n, ordered=True
        )
    elif norm == HM1:
        if basis_lap is None:
            raise ValueError("H^-1 oracle needs the Laplacian basis")
        if coeffs is None:
            from .products import expansion_coefficients

            coeffs = expansion_coefficients(basis_src, basis_lap, n, basis_lap.count)
        if coeffs.m * n * n > entry_cap:
            raise MemoryError(
                f"oracle matrix would hold {coeffs.m * n * n} entries (cap {entry_cap})"
            )
        sub = coeffs if coeffs.n == n else coeffs.restrict(n)
        scale = np.sqrt(hm1_weights(sub, basis_lap))
        rows = [pair_row(i, j, n) for i in range(n) for j in range(n)]
        A = (sub.coeffs[rows] * scale[None, :]).T
    else:
        raise ValueError(f"unknown norm {norm!r}")
    return _rank_from_svd(A, eps)


def _rank_from_svd(A: np.ndarray, eps: float) -> int:
    """Residual of column j after keeping k singular directions is
    sqrt(sum_{i>=k} (s_i Vh[i,j])^2); returns the smallest adequate k."""
    _, s, Vh = np.linalg.svd(A, full_matrices=False)
    T = (s[:, None] * Vh) ** 2
    resid_sq = np.vstack([np.cumsum(T[::-1], axis=0)[::-1], np.zeros(T.shape[1])])
    worst = np.sqrt(np.max(resid_sq, axis=1))
    hits = np.nonzero(worst <= eps)[0]
    return int(hits[0]) if hits.size else int(len(s))


def numerical_rank(A: np.ndarray, rel_tol: float = 1e-10) -> int:
    """Rank by singular value threshold rel_tol * s_max."""
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def geometric_r_samples(m: int, extra=()) -> list[int]:
    """r values 0, 1, 2, 4, ... m plus any extra cutoffs, sorted unique."""
    samples = {0, m}
    r = 1
    while r < m:
        samples.add(r)
        r *= 2
    samples.update(int(r) for r in extra if 0 <= r <= m)
    return sorted(samples)


def tail_slope(r_values, tails, floor: float = 1e-13) -> float:
    """Log-log slope of tail vs r, ignoring r=0 and roundoff-floor samples."""
    r = np.asarray(r_values, dtype=float)
    t = np.asarray(tails, dtype=float)
    keep = (r > 0) & (t > floor)
    if np.sum(keep) < 2:
        raise ValueError("not enough samples above the roundoff floor for a slope fit")
    slope, _ = np.polyfit(np.log(r[keep]), np.log(t[keep]), 1)
    return float(slope)


@dataclass(frozen=True)
class TailCurve:
    """Sampled tail-vs-r curve for one pair, or the worst-pair aggregate."""

    norm: str
    n: int
    i: int | None                 # None marks the max-over-pairs aggregate
    j: int | None
    samples: list[tuple[int, float]]


@dataclass(frozen=True)
class RankReport:
    """Per-(n, eps, norm) rank comparison.

    `ms` is a deterministic cost model (work in Mflop, i.e. milliseconds at
    a nominal 1 Gflop/s) rather than wall clock, so identical configs emit
    bitwise-identical CSV rows; real wall times go to summary.json.
    """

    n: int
    eps: float
    norm: str
    r_predicted: int
    r_empirical: int
    r_oracle: int
    max_sup: float
    implied_constant: float
    ms: float


@dataclass(frozen=True)
class ScalingReport:
    rank_reports: list[RankReport]
    tail_curves: list[TailCurve]
    slopes: dict = field(default_factory=dict)   # norm -> worst-pair log-log slope


def scaling_report(
    basis_src: SpectralBasis,
    basis_lap: SpectralBasis | None,
    coeffs_l2: ProductCoefficients | None,
    coeffs_hm1: ProductCoefficients | None,
    n_list,
    eps_list,
    norms,
    d: int,
    calib_l2: float = 1.0,
    calib_hm1: float = 1.0,
    curve_n: int | None = None,
    curve_r_max: int | None = None,
) -> ScalingReport:
    """Sweep (n, eps, norm) cells; emit rank reports, tail curves and slopes."""
    from .eigensolve import sup_norms

    reports: list[RankReport] = []
    curves: list[TailCurve] = []
    slopes: dict[str, float] = {}

    for norm in norms:
        if norm == L2:
            coeffs, weights, calib = coeffs_l2, None, calib_l2
        elif norm == HM1:
            coeffs, calib = coeffs_hm1, calib_hm1
            weights = hm1_weights(coeffs, basis_lap)
        else:
            raise ValueError(f"unknown norm {norm!r}")

        for n in n_list:
            sub = coeffs.restrict(n) if n != coeffs.n else coeffs
            table = tail_table(sub, weights)
            max_tails = np.max(table, axis=0)
            _, S = sup_norms(basis_src, n)
            rows = basis_src.grid.node_count if norm == L2 else coeffs.m
            cell_flops = 4.0 * rows * (n * n) ** 2 + sub.coeffs.size
            cutoffs = []
            for eps in eps_list:
                if norm == L2:
                    r_pred = cutoff_l2(eps, n, S, d, calib)
                    base = (S / eps) ** d * n
                else:
                    r_pred = cutoff_hm1(eps, n, S, d, calib)
                    base = (S / eps) ** (d / 2.0) * math.sqrt(n)
                r_emp = empirical_rank(max_tails, eps)
                r_orc = oracle_rank(
                    basis_src, n, eps, norm, basis_lap=basis_lap, coeffs=coeffs
                )
                ms = cell_flops / 1e6
                reports.append(
                    RankReport(
                        n=n,
                        eps=eps,
                        norm=norm,
                        r_predicted=r_pred,
                        r_empirical=r_emp,
                        r_oracle=r_orc,
                        max_sup=S,
                        implied_constant=r_emp / base,
                        ms=ms,
                    )
                )
                cutoffs.append(r_pred)

            if curve_n is not None and n == curve_n:
                r_max = coeffs.m if curve_r_max is None else curve_r_max
                r_samples = [r for r in geometric_r_samples(coeffs.m, extra=cutoffs)]
                agg = [(r, float(max_tails[r])) for r in r_samples]
                curves.append(TailCurve(norm=norm, n=n, i=None, j=None, samples=agg))
                for (i, j) in pair_list(n):
                    row = table[pair_row(i, j, n)]
                    curves.append(
                        TailCurve(
                            norm=norm,
                            n=n,
                            i=i,
                            j=j,
                            samples=[(r, float(row[r])) for r in r_samples],
                        )
                    )
                fit_r = [r for r in r_samples if 0 < r <= r_max]
                slopes[norm] = tail_slope(fit_r, [max_tails[r] for r in fit_r])

    return ScalingReport(rank_reports=reports, tail_curves=curves, slopes=slopes)
