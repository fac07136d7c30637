import numpy as np
import pytest

from sttensor import (
    AlsOptions,
    DenseTensor3,
    GridSpec,
    SpatialWeights,
    StpcaOptions,
    SyntheticConfig,
    build_fourier_basis,
    build_grid_weights,
    cp_als,
    fit_coefficients,
    generate_synthetic,
    moran_operator,
    morans_index,
    stpca,
    stpca_to_cp_init,
)
from sttensor.stpca import FunctionalCoefficients


class TestFourierBasis:
    def test_bmax_zero_is_constant_column(self):
        basis = build_fourier_basis(16, 0)
        assert basis.design.shape == (16, 1)
        np.testing.assert_allclose(basis.design[:, 0], 1 / np.sqrt(16.0))

    def test_365_points_5_columns_zero_mean_harmonics(self):
        basis = build_fourier_basis(365, 2)
        assert basis.design.shape == (365, 5)
        means = basis.design[:, 1:].mean(axis=0)
        assert np.abs(means).max() < 1e-10

    def test_discrete_orthogonality(self):
        basis = build_fourier_basis(64, 5)
        gram = basis.design.T @ basis.design
        assert np.abs(gram - np.eye(11)).max() < 1e-8

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            build_fourier_basis(10, 5)


class TestFitCoefficients:
    def test_constant_series_gives_zero_coefficients(self):
        t = DenseTensor3(np.full((16, 3, 1), 7.5))
        coeffs = fit_coefficients(t, build_fourier_basis(16, 1))
        assert np.abs(coeffs.theta).max() < 1e-9

    def test_planted_basis_function_recovered(self):
        basis = build_fourier_basis(48, 2)
        column = 2  # first cosine harmonic
        data = np.zeros((48, 2, 1))
        data[:, 0, 0] = basis.design[:, column]
        data[:, 1, 0] = -basis.design[:, column]
        t = DenseTensor3(data)
        coef = basis.design.T @ (data[:, 0, 0] - data[:, 0, 0].mean())
        expected = np.zeros(5)
        expected[column] = 1.0
        np.testing.assert_allclose(coef, expected, atol=1e-10)
        # after column centering across the two opposite locations the rows
        # keep the planted structure
        coeffs = fit_coefficients(t, basis)
        np.testing.assert_allclose(coeffs.theta[0], expected, atol=1e-10)

    def test_residual_orthogonal_to_design(self):
        rng = np.random.default_rng(20)
        basis = build_fourier_basis(40, 3)
        data = rng.standard_normal((40, 4, 2))
        t = DenseTensor3(data)
        coeffs = fit_coefficients(t, basis)
        d0 = basis.n_columns
        for j in range(4):
            for k in range(2):
                series = data[:, j, k]
                centered = series - series.mean()
                theta_jk = coeffs.theta[j, k * d0 : (k + 1) * d0]
                # undo the cross-location column centering to get the raw fit
                col_means = np.zeros(d0)
                for jj in range(4):
                    cen = data[:, jj, k] - data[:, jj, k].mean()
                    col_means += basis.design.T @ cen
                col_means /= 4
                raw = theta_jk + col_means
                raw[0] = 0.0
                residual = centered - basis.design @ raw
                assert np.abs(basis.design.T @ residual)[1:].max() < 1e-8

    def test_theta_columns_centered(self):
        rng = np.random.default_rng(21)
        t = DenseTensor3(rng.standard_normal((30, 6, 2)))
        coeffs = fit_coefficients(t, build_fourier_basis(30, 2))
        assert coeffs.column_centered
        assert np.abs(coeffs.theta.mean(axis=0)).max() < 1e-10

    def test_length_mismatch(self):
        t = DenseTensor3(np.ones((8, 2, 1)))
        with pytest.raises(ValueError):
            fit_coefficients(t, build_fourier_basis(16, 1))


class TestGridWeights:
    def test_2x2_queen(self):
        w = build_grid_weights(GridSpec.full(2, 2), "queen")
        dense = w.matrix.toarray()
        assert w.row_normalized
        np.testing.assert_allclose(dense.sum(axis=1), 1.0)
        np.testing.assert_allclose(dense[dense > 0], 1 / 3)
        assert (np.diag(dense) == 0).all()
        assert ((dense > 0).sum(axis=1) == 3).all()

    def test_1x3_line_queen(self):
        w = build_grid_weights(GridSpec.full(1, 3), "queen")
        dense = w.matrix.toarray()
        np.testing.assert_allclose(dense[1], [0.5, 0.0, 0.5])
        np.testing.assert_allclose(dense[0], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(dense[2], [0.0, 1.0, 0.0])

    def test_paper_grid_size(self):
        grid = GridSpec.full(34, 31)  # 31 cells in longitude, 34 in latitude
        assert grid.n_active == 1054
        w = build_grid_weights(grid, "queen")
        assert w.size == 1054
        sums = np.asarray(w.matrix.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_isolated_cell_reported(self):
        active = np.zeros(9, dtype=bool)
        active[0] = True  # corner
        active[8] = True  # opposite corner, not adjacent
        grid = GridSpec(3, 3, active=active)
        with pytest.raises(ValueError, match="has no neighbors"):
            build_grid_weights(grid, "queen")

    def test_knn_symmetric_pattern_and_normalized(self):
        w = build_grid_weights(GridSpec.full(4, 4), "knn:3")
        pattern = w.matrix.astype(bool)
        assert (pattern != pattern.T).nnz == 0
        sums = np.asarray(w.matrix.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_knn_uses_latlon_when_present(self):
        rows = 2
        cols = 3
        # lat/lon make cell 0 nearest to cell 5 even though grid distance says otherwise
        lat = np.array([0.0, 10.0, 20.0, 30.0, 40.0, 0.1])
        lon = np.array([0.0, 10.0, 20.0, 30.0, 40.0, 0.1])
        grid = GridSpec(rows, cols, lat=lat, lon=lon)
        w = build_grid_weights(grid, "knn:1")
        assert w.matrix[0, 5] > 0

    def test_unknown_scheme(self):
        with pytest.raises(ValueError):
            build_grid_weights(GridSpec.full(2, 2), "rook")


class TestSpatialWeightsValidation:
    def test_rejects_nonzero_diagonal(self):
        m = np.array([[0.5, 0.5], [0.5, 0.0]])
        with pytest.raises(ValueError, match="diagonal"):
            SpatialWeights(m)

    def test_rejects_negative(self):
        m = np.array([[0.0, -1.0], [-1.0, 0.0]])
        with pytest.raises(ValueError, match="nonnegative"):
            SpatialWeights(m)

    def test_rejects_asymmetric_pattern(self):
        m = np.array([[0.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="symmetric"):
            SpatialWeights(m)

    def test_rejects_bad_row_sums_when_normalized(self):
        m = np.array([[0.0, 2.0], [2.0, 0.0]])
        with pytest.raises(ValueError, match="unit row sums"):
            SpatialWeights(m, row_normalized=True)

    def test_row_normalize(self):
        m = np.array([[0.0, 2.0, 1.0], [2.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
        w = SpatialWeights(m).row_normalize()
        sums = np.asarray(w.matrix.sum(axis=1)).ravel()
        np.testing.assert_allclose(sums, 1.0)


def ring_weights(n=8):
    m = np.zeros((n, n))
    for i in range(n):
        m[i, (i - 1) % n] = 0.5
        m[i, (i + 1) % n] = 0.5
    return SpatialWeights(m, row_normalized=True)


class TestMoransIndex:
    def test_ring_alternating_is_minus_one(self):
        w = ring_weights(8)
        x = np.array([1.0, -1.0] * 4)
        assert morans_index(x, w) == pytest.approx(-1.0, abs=1e-10)

    def test_smooth_ramp_is_positive(self):
        w = build_grid_weights(GridSpec.full(1, 8), "queen")
        x = np.arange(8.0)
        assert morans_index(x, w) > 0

    def test_constant_input_errors(self):
        w = ring_weights(6)
        with pytest.raises(ValueError):
            morans_index(np.ones(6), w)

    def test_translation_invariance(self):
        rng = np.random.default_rng(22)
        w = build_grid_weights(GridSpec.full(4, 5), "queen")
        x = rng.standard_normal(20)
        base = morans_index(x, w)
        assert morans_index(x + 100.0, w) == pytest.approx(base, abs=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(23)
        w = build_grid_weights(GridSpec.full(4, 5), "queen")
        x = rng.standard_normal(20)
        base = morans_index(x, w)
        for c in (0.5, -3.0, 1e4):
            assert morans_index(c * x, w) == pytest.approx(base, abs=1e-12)


class TestStpca:
    @staticmethod
    def centered_coeffs(theta):
        theta = theta - theta.mean(axis=0, keepdims=True)
        return FunctionalCoefficients(theta, 1, theta.shape[1], column_centered=True)

    def test_zero_weights_give_zero_eigenvalues(self):
        rng = np.random.default_rng(24)
        coeffs = self.centered_coeffs(rng.standard_normal((10, 4)))
        w = SpatialWeights(np.zeros((10, 10)))
        result = stpca(coeffs, w, 2)
        np.testing.assert_allclose(result.eigenvalues, 0.0, atol=1e-15)

    def test_operator_symmetric(self):
        rng = np.random.default_rng(25)
        w = build_grid_weights(GridSpec.full(4, 4), "queen")
        for _ in range(5):
            coeffs = self.centered_coeffs(rng.standard_normal((16, 6)))
            m = moran_operator(coeffs, w)
            assert np.abs(m - m.T).max() < 1e-12

    def test_smooth_pattern_found_first(self):
        grid = GridSpec.full(1, 20)
        w = build_grid_weights(grid, "queen")
        smooth = np.sin(np.linspace(0, np.pi, 20))
        rng = np.random.default_rng(26)
        theta = np.zeros((20, 3))
        theta[:, 1] = smooth * 5.0
        theta += 0.05 * rng.standard_normal(theta.shape)
        coeffs = self.centered_coeffs(theta)
        result = stpca(coeffs, w, 1)
        assert result.eigenvalues[0] > 0
        score = result.spatial_scores[:, 0]
        corr = np.corrcoef(score, smooth)[0, 1]
        assert abs(corr) > 0.9

    def test_eigenvalues_descending_vectors_orthonormal(self):
        rng = np.random.default_rng(27)
        w = build_grid_weights(GridSpec.full(5, 5), "queen")
        coeffs = self.centered_coeffs(rng.standard_normal((25, 7)))
        result = stpca(coeffs, w, 4)
        assert (np.diff(result.eigenvalues) <= 1e-14).all()
        gram = result.eigenvectors.T @ result.eigenvectors
        assert np.abs(gram - np.eye(4)).max() < 1e-10

    def test_score_invariance_to_column_shift_before_centering(self):
        rng = np.random.default_rng(28)
        w = build_grid_weights(GridSpec.full(4, 4), "queen")
        theta = rng.standard_normal((16, 5))
        shifted = theta.copy()
        shifted[:, 2] += 42.0
        r1 = stpca(self.centered_coeffs(theta), w, 3)
        r2 = stpca(self.centered_coeffs(shifted), w, 3)
        np.testing.assert_allclose(r1.spatial_scores, r2.spatial_scores, atol=1e-10)

    def test_rank_too_large(self):
        rng = np.random.default_rng(29)
        w = build_grid_weights(GridSpec.full(2, 3), "queen")
        coeffs = self.centered_coeffs(rng.standard_normal((6, 3)))
        with pytest.raises(ValueError):
            stpca(coeffs, w, 4)


class TestStpcaToCpInit:
    def test_shapes(self):
        cfg = SyntheticConfig(n_steps=60, n_rows=6, n_cols=5, rank=2, noise_sigma=0.0, seed=2)
        t, _ = generate_synthetic(cfg)
        a, b, c = stpca_to_cp_init(t, GridSpec.full(6, 5), 2)
        assert a.shape == (60, 2) and b.shape == (30, 2) and c.shape == (3, 2)
        np.testing.assert_allclose(c, 1.0)
        np.testing.assert_allclose(np.linalg.norm(b, axis=0), 1.0, atol=1e-12)

    def test_planted_spatial_columns_matched(self):
        cfg = SyntheticConfig(
            n_steps=365, n_rows=12, n_cols=12, rank=2, noise_sigma=0.05, seed=5
        )
        t, truth = generate_synthetic(cfg)
        _, b, _ = stpca_to_cp_init(t, GridSpec.full(12, 12), 2)
        planted = truth.model.factors[1]
        cos = np.abs(b.T @ planted)
        available = list(range(2))
        scores = []
        for col in range(2):
            best = max(available, key=lambda r: cos[r, col])
            scores.append(cos[best, col])
            available.remove(best)
        assert (np.array(scores) > 0.8).all()

    def test_deterministic(self):
        cfg = SyntheticConfig(n_steps=50, n_rows=4, n_cols=5, rank=2, noise_sigma=0.1, seed=3)
        t, _ = generate_synthetic(cfg)
        grid = GridSpec.full(4, 5)
        first = stpca_to_cp_init(t, grid, 2, StpcaOptions(seed=9))
        second = stpca_to_cp_init(t, grid, 2, StpcaOptions(seed=9))
        for f1, f2 in zip(first, second):
            np.testing.assert_array_equal(f1, f2)

    def test_grid_mismatch(self):
        cfg = SyntheticConfig(n_steps=50, n_rows=4, n_cols=5, rank=2, seed=0)
        t, _ = generate_synthetic(cfg)
        with pytest.raises(ValueError):
            stpca_to_cp_init(t, GridSpec.full(4, 4), 2)

    def test_end_to_end_not_worse_than_random_median(self):
        cfg = SyntheticConfig(n_steps=200, n_rows=10, n_cols=10, rank=3, noise_sigma=0.1, seed=6)
        t, _ = generate_synthetic(cfg)
        grid = GridSpec.full(10, 10)
        opts = AlsOptions(rank=3, initializer="stpca", seed=0, max_iters=80, fit_tolerance=1e-10)
        _, trace = cp_als(t, opts, grid=grid)
        stpca_final = trace.rel_errors[-1]
        randoms = []
        for seed in range(10):
            ropts = AlsOptions(rank=3, initializer="random", seed=seed, max_iters=80, fit_tolerance=1e-10)
            _, rtrace = cp_als(t, ropts)
            randoms.append(rtrace.rel_errors[-1])
        assert stpca_final <= np.median(randoms) + 1e-12
