"""End-to-end pipeline: grid -> operators -> eigensolve -> products -> reports.

Owns the five CLI commands (spectrum, tail-curves, rank-scan, eri-bench,
verify-all), the cross-module invariant suite behind verify-all, and all
file output.  CSVs are written atomically with 17 significant digits so
identical configs diff bitwise; summary.json echoes the config and every
calibration constant next to the per-check booleans.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .grid import Grid
from .operator import (
    CoefficientField,
    DiscreteOperator,
    assemble_laplacian,
    assemble_schrodinger,
    gradient_energy,
    sample_coefficients,
    weyl_regime_cap,
)
from .eigensolve import (
    SpectralBasis,
    comparability_check,
    lowest_eigenpairs,
    sup_norms,
    supnorm_growth_fit,
    weyl_fit,
)
from .products import (
    ProductCoefficients,
    expansion_coefficients,
    pair_list,
    product_function,
    quadratic_chain_report,
)
from .lowrank import (
    ScalingReport,
    geometric_r_samples,
    hm1_weights,
    scaling_report,
    tail_table,
)
from .eri import ERIResult, eri_benchmark

COMMANDS = ("spectrum", "tail-curves", "rank-scan", "eri-bench", "verify-all")


@dataclass(eq=False)
class Pipeline:
    """Solved state shared by every command for one configuration."""

    config: ExperimentConfig
    grid: Grid
    field_: CoefficientField
    op_L: DiscreteOperator
    op_lap: DiscreteOperator
    basis_L: SpectralBasis
    basis_lap: SpectralBasis
    coeffs_l2: ProductCoefficients
    coeffs_hm1: ProductCoefficients
    n_max: int
    complete: bool
    build_seconds: float
    timings: dict = field(default_factory=dict)


def build_pipeline(config: ExperimentConfig) -> Pipeline:
    t0 = time.perf_counter()
    grid = config.make_grid()
    G = grid.node_count
    fld = sample_coefficients(config.coefficients, grid)
    op_L = assemble_schrodinger(fld, grid)
    op_lap = assemble_laplacian(grid)

    complete = G <= config.dense_cap
    m_solve = G if complete else max(config.solver_m, max(config.sweep_n))
    if not complete:
        raise ValueError(
            f"grid has {G} nodes > dense_cap {config.dense_cap}; tail and rank "
            "commands need the complete spectrum, shrink the grid or raise the cap"
        )

    basis_L = lowest_eigenpairs(op_L, m_solve, config.solver_tol)
    if (op_L.matrix - op_lap.matrix).nnz == 0:
        # flat configurations: one solve serves both operators
        basis_lap = SpectralBasis(
            grid=grid,
            tag="laplacian",
            eigenvalues=basis_L.eigenvalues.copy(),
            vectors=basis_L.vectors.copy(),
            residuals=basis_L.residuals.copy(),
        )
    else:
        basis_lap = lowest_eigenpairs(op_lap, m_solve, config.solver_tol)

    n_max = max(config.sweep_n)
    if config.eri_enabled:
        n_max = max(n_max, config.eri_n)
    coeffs_l2 = expansion_coefficients(basis_L, basis_L, n_max, m_solve)
    coeffs_hm1 = expansion_coefficients(basis_L, basis_lap, n_max, m_solve)

    return Pipeline(
        config=config,
        grid=grid,
        field_=fld,
        op_L=op_L,
        op_lap=op_lap,
        basis_L=basis_L,
        basis_lap=basis_lap,
        coeffs_l2=coeffs_l2,
        coeffs_hm1=coeffs_hm1,
        n_max=n_max,
        complete=complete,
        build_seconds=time.perf_counter() - t0,
    )


# ----------------------------------------------------------------------
# file output helpers
# ----------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    _write_atomic(path, "\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------

def cmd_spectrum(pipe: Pipeline, out_dir: str, summary: dict) -> None:
    m = pipe.config.solver_m
    per_k, _ = sup_norms(pipe.basis_L, m)
    rows = [
        (
            k + 1,
            pipe.basis_L.eigenvalues[k],
            pipe.basis_lap.eigenvalues[k],
            per_k[k],
            pipe.basis_L.residuals[k],
        )
        for k in range(m)
    ]
    write_csv(
        os.path.join(out_dir, "spectrum.csv"),
        ["k", "lambda_L", "mu_lap", "sup_norm", "residual"],
        rows,
    )
    cap = min(weyl_regime_cap(pipe.grid), pipe.basis_L.count)
    k_min = max(4, cap // 8)   # skip the boundary-dominated low modes
    if cap - k_min + 1 >= 8:
        fit = weyl_fit(pipe.basis_L, pipe.grid.dimension, k_min, cap)
        summary["weyl_fit"] = {
            "k_min": k_min,
            "k_max": cap,
            "exponent": fit.exponent,
            "expected_exponent": fit.expected_exponent,
            "constant": fit.constant,
            "max_rel_dev": fit.max_rel_dev,
        }
    else:
        summary["weyl_fit"] = {"skipped": "fewer than 8 modes inside the safe window"}
    if cap - max(4, cap // 8) + 1 >= 8:
        alpha, const = supnorm_growth_fit(pipe.basis_L, max(4, cap // 8), cap)
        summary["supnorm_growth"] = {
            "exponent": alpha,
            "constant": const,
            "reference_exponent": (pipe.grid.dimension - 1) / 4.0,
        }


def _scaling(pipe: Pipeline, curve_n: int | None = None) -> ScalingReport:
    cfg = pipe.config
    return scaling_report(
        pipe.basis_L,
        pipe.basis_lap,
        pipe.coeffs_l2,
        pipe.coeffs_hm1,
        cfg.sweep_n,
        cfg.sweep_eps,
        cfg.sweep_norms,
        pipe.grid.dimension,
        calib_l2=cfg.calib_l2,
        calib_hm1=cfg.calib_hm1,
        curve_n=curve_n,
        curve_r_max=pipe.grid.node_count // 2,
    )


def cmd_tail_curves(
    pipe: Pipeline, out_dir: str, summary: dict, report: ScalingReport | None = None
) -> ScalingReport:
    curve_n = max(pipe.config.sweep_n)
    if report is None:
        report = _scaling(pipe, curve_n=curve_n)
    rows = []
    for curve in report.tail_curves:
        i = 0 if curve.i is None else curve.i + 1
        j = 0 if curve.j is None else curve.j + 1
        for r, value in curve.samples:
            rows.append((curve.norm, i, j, r, value))
    write_csv(
        os.path.join(out_dir, "tails.csv"),
        ["norm", "i", "j", "r", "tail"],
        rows,
    )
    summary["tail_slopes"] = {
        norm: slope for norm, slope in report.slopes.items()
    }
    summary["tail_curve_n"] = curve_n
    return report


def cmd_rank_scan(
    pipe: Pipeline, out_dir: str, summary: dict, report: ScalingReport | None = None
) -> ScalingReport:
    if report is None:
        report = _scaling(pipe)
    rows = [
        (
            rep.n,
            rep.eps,
            rep.norm,
            rep.r_predicted,
            rep.r_empirical,
            rep.r_oracle,
            rep.max_sup,
            rep.implied_constant,
            rep.ms,
        )
        for rep in report.rank_reports
    ]
    # the column stays named r_paper so rank tables diff cleanly across
    # implementations sharing this file format
    write_csv(
        os.path.join(out_dir, "ranks.csv"),
        ["n", "eps", "norm", "r_paper", "r_empirical", "r_oracle", "max_sup", "implied_constant", "ms"],
        rows,
    )
    summary["rank_cells"] = len(rows)
    return report


def cmd_eri_bench(pipe: Pipeline, out_dir: str, summary: dict) -> ERIResult | None:
    cfg = pipe.config
    if not cfg.eri_enabled:
        summary["eri"] = {"enabled": False}
        return None
    result = eri_benchmark(
        cfg.eri_n,
        cfg.eri_eps,
        pipe.basis_L,
        pipe.basis_lap,
        pipe.coeffs_hm1,
        calib_hm1=cfg.calib_hm1,
        sample_seed=cfg.eri_sample_seed,
    )
    rows = []
    for (i, j, k, l), exact, fitted in zip(result.quadruples, result.exact, result.fitted):
        rows.append(
            (
                i + 1,
                j + 1,
                k + 1,
                l + 1,
                exact,
                fitted,
                abs(exact - fitted),
                result.quadruple_certificate(i, j, k, l),
            )
        )
    write_csv(
        os.path.join(out_dir, "eri.csv"),
        ["i", "j", "k", "l", "exact", "fitted", "abs_err", "certificate"],
        rows,
    )
    summary["eri"] = {
        "enabled": True,
        "n": result.n,
        "r": result.r,
        "eps": result.eps,
        "quadruples": len(result.quadruples),
        "max_abs_error": result.max_abs_error,
        "mean_abs_error": result.mean_abs_error,
        "certificate": result.certificate,
        "exact_ops": result.exact_ops,
        "fitted_ops": result.fitted_ops,
        "op_ratio": result.fitted_ops / result.exact_ops,
        "exact_seconds": result.exact_seconds,
        "fitted_seconds": result.fitted_seconds,
    }
    return result


# ----------------------------------------------------------------------
# verify-all invariant suite
# ----------------------------------------------------------------------

def run_checks(pipe: Pipeline, scaling: ScalingReport, eri: ERIResult | None) -> dict:
    """Cross-module invariants; each entry is {'ok': bool, 'detail': str}."""
    checks: dict[str, dict] = {}
    cfg = pipe.config

    def record(name, ok, detail):
        checks[name] = {"ok": bool(ok), "detail": detail}

    worst = max(float(np.max(pipe.basis_L.residuals)), float(np.max(pipe.basis_lap.residuals)))
    record("residuals", worst <= cfg.solver_tol, f"max scaled residual {worst:.3e}")

    defect = max(pipe.basis_L.gram_defect(), pipe.basis_lap.gram_defect())
    record("orthonormality", defect <= 1e-10, f"max gram defect {defect:.3e}")

    chain = quadratic_chain_report(pipe.coeffs_l2, pipe.basis_L, pipe.field_, pipe.n_max)
    margin = chain.bound - float(np.max(chain.values))
    record(
        "quadratic_chain",
        chain.ok,
        f"n={chain.n}, bound {chain.bound:.6g}, worst value {float(np.max(chain.values)):.6g}, "
        f"margin {margin:.3e}",
    )

    lam = pipe.basis_L.eigenvalues[: pipe.coeffs_l2.m]
    table_l2 = tail_table(pipe.coeffs_l2)
    Q = (pipe.coeffs_l2.coeffs**2) @ lam
    samples = [r for r in geometric_r_samples(pipe.coeffs_l2.m) if r >= 1]
    worst_slack = -np.inf
    for r in samples:
        lhs = lam[r - 1] * table_l2[:, r] ** 2
        worst_slack = max(worst_slack, float(np.max(lhs - Q)))
    record(
        "tail_identity_l2",
        worst_slack <= 1e-10 * (1.0 + float(np.max(np.abs(Q)))),
        f"worst lambda_r*tail^2 - Q = {worst_slack:.3e}",
    )

    mu = pipe.basis_lap.eigenvalues[: pipe.coeffs_hm1.m]
    weights = hm1_weights(pipe.coeffs_hm1, pipe.basis_lap)
    table_hm1 = tail_table(pipe.coeffs_hm1, weights)
    table_l2lap = tail_table(pipe.coeffs_hm1)
    worst_slack3 = -np.inf
    for r in samples:
        lhs = mu[r - 1] * table_hm1[:, r] ** 2
        rhs = table_l2lap[:, r] ** 2
        worst_slack3 = max(worst_slack3, float(np.max(lhs - rhs)))
    record(
        "tail_identity_hm1",
        worst_slack3 <= 1e-10,
        f"worst mu_r*tail_hm1^2 - tail_l2^2 = {worst_slack3:.3e}",
    )

    grad_sq = (pipe.coeffs_hm1.coeffs**2) @ mu
    direct_all = np.array(
        [
            gradient_energy(product_function(i, j, pipe.basis_L))
            for (i, j) in pair_list(pipe.n_max)
        ]
    )
    # rtol 1e-6 plus an absolute floor so zero-gradient products (periodic
    # constant mode) are judged against the family's noise scale, not 0
    atol = 1e-9 * (1.0 + float(np.max(direct_all)))
    excess = np.abs(direct_all - grad_sq) / (1e-6 * direct_all + atol)
    worst = float(np.max(excess))
    record("h1_identity", worst <= 1.0, f"worst deviation at {worst:.3e} of tolerance")

    if pipe.complete:
        sums = np.sum(pipe.coeffs_l2.coeffs**2, axis=1)
        norms_sq = pipe.coeffs_l2.product_l2_norms**2
        rel = float(np.max(np.abs(sums - norms_sq) / np.maximum(norms_sq, 1e-300)))
        record("parseval", rel <= 1e-8, f"worst relative Parseval defect {rel:.3e}")

    k_cmp = min(cfg.solver_m, pipe.basis_L.count, pipe.basis_lap.count)
    comp = comparability_check(pipe.basis_L, pipe.basis_lap, pipe.field_, k_cmp)
    record("comparability", comp.ok, f"k<={k_cmp}, worst margin {comp.worst:.3e}")

    dominated = all(rep.r_oracle <= rep.r_empirical for rep in scaling.rank_reports)
    record(
        "oracle_dominance",
        dominated,
        f"{len(scaling.rank_reports)} sweep cells",
    )

    zero_tail = max(float(table_l2[:, -1].max()), float(table_hm1[:, -1].max()))
    mono_l2 = float(np.max(np.diff(np.max(table_l2, axis=0))))
    record(
        "tail_curve_invariants",
        zero_tail <= 1e-10 and mono_l2 <= 1e-14,
        f"tail at r=G {zero_tail:.3e}, worst increase {mono_l2:.3e}",
    )

    if eri is not None:
        worst_violation = -np.inf
        for (i, j, k, l), e, f_ in zip(eri.quadruples, eri.exact, eri.fitted):
            cert = eri.quadruple_certificate(i, j, k, l)
            worst_violation = max(worst_violation, abs(e - f_) - cert)
        ok = worst_violation <= 1e-12 and eri.max_abs_error <= eri.certificate + 1e-12
        record(
            "eri_certificate",
            ok,
            f"worst |exact-fitted| - cert = {worst_violation:.3e}, "
            f"max error {eri.max_abs_error:.3e} vs certificate {eri.certificate:.3e}",
        )

    return checks


def run(config: ExperimentConfig, command: str, out_dir: str | None = None) -> int:
    """Execute one command; returns the process exit status (0 ok, 1 failed check)."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r} (commands: {', '.join(COMMANDS)})")
    out = out_dir or config.output_dir
    os.makedirs(out, exist_ok=True)

    t0 = time.perf_counter()
    pipe = build_pipeline(config)
    summary: dict = {
        "command": command,
        "config": config.raw,
        "version": __version__,
        "calibration": {"calib_l2": config.calib_l2, "calib_hm1": config.calib_hm1},
        "grid_nodes": pipe.grid.node_count,
        "a_min": pipe.field_.a_min,
        "a_max": pipe.field_.a_max,
        "v_sup": pipe.field_.v_sup,
    }

    status = 0
    if command == "spectrum":
        cmd_spectrum(pipe, out, summary)
    elif command == "tail-curves":
        cmd_tail_curves(pipe, out, summary)
    elif command == "rank-scan":
        cmd_rank_scan(pipe, out, summary)
    elif command == "eri-bench":
        cmd_eri_bench(pipe, out, summary)
    else:  # verify-all
        cmd_spectrum(pipe, out, summary)
        report = _scaling(pipe, curve_n=max(config.sweep_n))
        cmd_tail_curves(pipe, out, summary, report=report)
        cmd_rank_scan(pipe, out, summary, report=report)
        eri = cmd_eri_bench(pipe, out, summary)
        checks = run_checks(pipe, report, eri)
        summary["checks"] = {name: entry["ok"] for name, entry in checks.items()}
        summary["check_details"] = checks
        if not all(entry["ok"] for entry in checks.values()):
            status = 1

    summary["seconds"] = time.perf_counter() - t0
    summary["build_seconds"] = pipe.build_seconds
    _write_atomic(
        os.path.join(out, "summary.json"),
        json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n",
    )
    return status


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
