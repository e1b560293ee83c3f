import numpy as np
import pytest
import scipy.linalg as sla

from eigenrank.grid import GridFunction, inner, make_grid
from eigenrank.operator import (
    CoefficientSpec,
    assemble_laplacian,
    assemble_schrodinger,
    gradient_energy,
    sample_coefficients,
    weyl_regime_cap,
)


def dirichlet_laplacian_spectrum(length, points):
    """Independent closed form: (4/h^2) sin^2(k pi h / (2L)), k = 1..points."""
    h = length / (points + 1)
    k = np.arange(1, points + 1)
    return (4.0 / h**2) * np.sin(k * np.pi * h / (2.0 * length)) ** 2


class TestCoefficientSampling:
    def test_constant(self):
        g = make_grid(1, np.pi, 32, "dirichlet")
        f = sample_coefficients(CoefficientSpec.constant(1.0, 0.0), g)
        assert all(np.all(a == 1.0) for a in f.a_face)
        assert np.all(f.v_node == 0.0)
        assert (f.a_min, f.a_max, f.v_sup) == (1.0, 1.0, 0.0)

    def test_harmonic_sup_at_extreme_node(self):
        g = make_grid(1, np.pi, 512, "dirichlet")
        f = sample_coefficients(CoefficientSpec.harmonic(1.0, 1.0), g)
        h = g.spacing[0]
        assert f.v_sup == pytest.approx((np.pi / 2 - h) ** 2, rel=1e-12)
        assert f.v_sup == pytest.approx((np.pi / 2) ** 2, rel=0.01)  # ~2.467 as grid refines

    def test_random_fourier_bounds_and_determinism(self):
        g = make_grid(2, (np.pi, np.pi), (24, 24), "dirichlet")
        spec = CoefficientSpec.random_fourier(seed=7, cutoff=4, a_amplitude=0.3, v_amplitude=0.5)
        f1 = sample_coefficients(spec, g)
        f2 = sample_coefficients(spec, g)
        assert f1.a_min >= 0.7 and f1.a_max <= 1.3
        assert 0.0 <= np.min(f1.v_node) and f1.v_sup <= 0.5
        for a, b in zip(f1.a_face, f2.a_face):
            np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(f1.v_node, f2.v_node)

    def test_rejects_bad_specs(self):
        with pytest.raises(ValueError):
            CoefficientSpec.constant(a0=-1.0)
        with pytest.raises(ValueError):
            CoefficientSpec.constant(a0=1.0, v0=-0.5)
        with pytest.raises(ValueError):
            CoefficientSpec.random_fourier(seed=1, a_amplitude=1.5, a0=1.0)


class TestAssembly:
    def test_flat_1d_matches_closed_form(self):
        g = make_grid(1, np.pi, 64, "dirichlet")
        op = assemble_laplacian(g)
        lam = sla.eigvalsh(op.matrix.toarray())
        np.testing.assert_allclose(lam, dirichlet_laplacian_spectrum(np.pi, 64), rtol=1e-10)

    def test_tridiagonal_stencil_entries(self):
        g = make_grid(1, np.pi, 16, "dirichlet")
        h = g.spacing[0]
        m = assemble_laplacian(g).matrix.toarray()
        np.testing.assert_allclose(np.diag(m), 2.0 / h**2, rtol=1e-14)
        np.testing.assert_allclose(np.diag(m, 1), -1.0 / h**2, rtol=1e-14)

    def test_potential_shift_is_diagonal(self):
        g = make_grid(1, np.pi, 32, "dirichlet")
        base = assemble_laplacian(g).matrix
        c = 2.5
        f = sample_coefficients(CoefficientSpec.constant(1.0, c), g)
        shifted = assemble_schrodinger(f, g).matrix
        diff = (shifted - base).toarray()
        np.testing.assert_allclose(diff, c * np.eye(32), atol=1e-14)

    def test_doubled_coefficient_doubles_eigenvalues(self):
        g = make_grid(1, np.pi, 32, "dirichlet")
        f = sample_coefficients(CoefficientSpec.constant(2.0, 0.0), g)
        lam2 = sla.eigvalsh(assemble_schrodinger(f, g).matrix.toarray())
        lam1 = sla.eigvalsh(assemble_laplacian(g).matrix.toarray())
        np.testing.assert_allclose(lam2, 2.0 * lam1, rtol=1e-12)

    def test_laplacian_equals_flat_schrodinger(self):
        g = make_grid(2, (np.pi, np.pi), (12, 12), "dirichlet")
        f = sample_coefficients(CoefficientSpec.constant(1.0, 0.0), g)
        assert (assemble_schrodinger(f, g).matrix - assemble_laplacian(g).matrix).nnz == 0

    def test_periodic_circulant_spectrum(self):
        g = make_grid(1, 2 * np.pi, 16, "periodic")
        lam = np.sort(sla.eigvalsh(assemble_laplacian(g).matrix.toarray()))
        h = g.spacing[0]
        k = np.arange(16)
        closed = np.sort((4.0 / h**2) * np.sin(np.pi * k / 16) ** 2)
        np.testing.assert_allclose(lam, closed, atol=1e-10)
        # nonzero eigenvalues come in pairs
        uniq, counts = np.unique(np.round(closed, 8), return_counts=True)
        assert np.all(counts[(uniq > 1e-8) & (uniq < closed.max() - 1e-8)] == 2)

    def test_row_sums_nonnegative_positive_only_near_boundary(self):
        g = make_grid(2, (np.pi, np.pi), (10, 10), "dirichlet")
        m = assemble_laplacian(g).matrix
        sums = np.asarray(m.sum(axis=1)).ravel()
        assert np.all(sums >= -1e-12)
        interior = np.zeros((10, 10), dtype=bool)
        interior[1:-1, 1:-1] = True
        interior = interior.ravel(order="F")
        assert np.max(np.abs(sums[interior])) < 1e-10
        assert np.all(sums[~interior] > 1e-10)

    def test_exact_symmetry_random_field(self):
        g = make_grid(2, (np.pi, np.pi), (16, 16), "dirichlet")
        spec = CoefficientSpec.random_fourier(seed=3, cutoff=3, a_amplitude=0.4, v_amplitude=1.0)
        m = assemble_schrodinger(sample_coefficients(spec, g), g).matrix
        assert abs(m - m.T).nnz == 0

    def test_gershgorin_lower_bound(self):
        g = make_grid(1, np.pi, 64, "dirichlet")
        op = assemble_laplacian(g)
        lam = sla.eigvalsh(op.matrix.toarray())
        assert lam[0] >= op.gershgorin_lower - 1e-12


class TestQuadraticForms:
    def test_ellipticity_sandwich_on_random_vectors(self):
        g = make_grid(2, (np.pi, np.pi), (16, 16), "dirichlet")
        spec = CoefficientSpec.random_fourier(seed=11, cutoff=3, a_amplitude=0.3, v_amplitude=0.0)
        f = sample_coefficients(spec, g)
        L0 = assemble_schrodinger(f, g).matrix   # V = 0 here
        D = assemble_laplacian(g).matrix
        rng = np.random.default_rng(0)
        for _ in range(10):
            u = rng.standard_normal(g.node_count)
            qa = u @ (L0 @ u)
            qd = u @ (D @ u)
            assert f.a_min * qd <= qa * (1 + 1e-12) + 1e-12
            assert qa <= f.a_max * qd * (1 + 1e-12) + 1e-12

    def test_consistency_with_continuum(self):
        # discrete lambda_k ~ k^2 with O(h^2 k^4) error on [0, pi]
        points = 256
        g = make_grid(1, np.pi, points, "dirichlet")
        lam = sla.eigvalsh(assemble_laplacian(g).matrix.toarray())
        for k in range(1, points // 8 + 1):
            assert abs(lam[k - 1] - k**2) <= 0.05 * k**2

    def test_gradient_energy_matches_operator_form(self):
        g = make_grid(2, (np.pi, np.pi), (14, 14), "dirichlet")
        spec = CoefficientSpec.random_fourier(seed=5, cutoff=2, a_amplitude=0.25, v_amplitude=0.0)
        f = sample_coefficients(spec, g)
        op = assemble_schrodinger(f, g)
        lap = assemble_laplacian(g)
        rng = np.random.default_rng(1)
        u = GridFunction(g, rng.standard_normal(g.node_count))
        assert gradient_energy(u, f) == pytest.approx(inner(op.apply(u), u), rel=1e-12)
        assert gradient_energy(u) == pytest.approx(inner(lap.apply(u), u), rel=1e-12)

    def test_gradient_energy_periodic(self):
        g = make_grid(1, 2 * np.pi, 32, "periodic")
        lap = assemble_laplacian(g)
        rng = np.random.default_rng(2)
        u = GridFunction(g, rng.standard_normal(32))
        assert gradient_energy(u) == pytest.approx(inner(lap.apply(u), u), rel=1e-12)


def test_weyl_regime_cap_values():
    g1 = make_grid(1, np.pi, 512, "dirichlet")
    assert weyl_regime_cap(g1) == 128
    g2 = make_grid(2, (np.pi, np.pi), (64, 64), "dirichlet")
    cap = weyl_regime_cap(g2)
    # quarter-disc of radius 16 holds ~pi*16^2/4 = 201 lattice modes
    assert 150 <= cap <= 256
