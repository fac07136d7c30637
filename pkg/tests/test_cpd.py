import numpy as np
import pytest

from sttensor import (
    AlsOptions,
    CpModel,
    DenseTensor3,
    GridSpec,
    NumericError,
    SyntheticConfig,
    cp_als,
    cp_reconstruct,
    generate_synthetic,
    init_hosvd,
    init_random,
)


def planted_tensor(n_steps=20, n_rows=5, n_cols=6, rank=3, sigma=0.0, seed=11):
    cfg = SyntheticConfig(
        n_steps=n_steps,
        n_rows=n_rows,
        n_cols=n_cols,
        rank=rank,
        noise_sigma=sigma,
        seed=seed,
    )
    return generate_synthetic(cfg)


class TestInitRandom:
    def test_deterministic_given_seed(self):
        f1 = init_random((5, 4, 3), 2, seed=42)
        f2 = init_random((5, 4, 3), 2, seed=42)
        for a, b in zip(f1, f2):
            np.testing.assert_array_equal(a, b)

    def test_shapes(self):
        a, b, c = init_random((5, 4, 3), 2, seed=0)
        assert a.shape == (5, 2) and b.shape == (4, 2) and c.shape == (3, 2)

    def test_entries_in_unit_interval(self):
        for f in init_random((6, 7, 3), 4, seed=1):
            assert (f >= 0).all() and (f < 1).all()

    def test_different_seeds_differ(self):
        f1 = init_random((5, 4, 3), 2, seed=0)
        f2 = init_random((5, 4, 3), 2, seed=1)
        assert any(not np.array_equal(a, b) for a, b in zip(f1, f2))


class TestInitHosvd:
    def test_superdiagonal_recovers_basis_vectors(self):
        data = np.zeros((3, 3, 3))
        for idx, val in enumerate((3.0, 2.0, 1.0)):
            data[idx, idx, idx] = val
        t = DenseTensor3(data)
        for factor in init_hosvd(t, 2):
            # columns match the first two standard basis vectors up to sign
            np.testing.assert_allclose(np.abs(factor), np.eye(3)[:, :2], atol=1e-12)

    def test_rank1_is_dominant_singular_vector(self):
        rng = np.random.default_rng(8)
        t = DenseTensor3(rng.standard_normal((6, 5, 4)))
        factors = init_hosvd(t, 1)
        from sttensor import unfold

        for mode, factor in enumerate(factors, start=1):
            u, _, _ = np.linalg.svd(unfold(t, mode), full_matrices=False)
            cos = abs(float(factor[:, 0] @ u[:, 0]))
            assert cos == pytest.approx(1.0, abs=1e-10)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            dims = tuple(rng.integers(4, 9, size=3))
            t = DenseTensor3(rng.standard_normal(dims))
            r = int(min(dims + (3,)))
            for factor in init_hosvd(t, r):
                gram = factor.T @ factor
                assert np.abs(gram - np.eye(r)).max() < 1e-10

    def test_padding_when_rank_exceeds_mode_dimension(self):
        rng = np.random.default_rng(10)
        t = DenseTensor3(rng.standard_normal((8, 7, 3)))
        a, b, c = init_hosvd(t, 5, seed=3)
        assert c.shape == (3, 5)
        # singular block stays orthonormal, padded columns are unit length
        assert np.abs(c[:, :3].T @ c[:, :3] - np.eye(3)).max() < 1e-10
        np.testing.assert_allclose(np.linalg.norm(c, axis=0), 1.0, atol=1e-10)
        a2, b2, c2 = init_hosvd(t, 5, seed=3)
        np.testing.assert_array_equal(c, c2)

    def test_rank_deficient_unfolding_padding_is_orthogonal(self):
        rng = np.random.default_rng(12)
        # rank-1 tensor: each unfolding has rank 1, so rank-3 init pads 2 columns
        x = rng.random(6) + 0.5
        y = rng.random(5) + 0.5
        z = rng.random(4) + 0.5
        t = DenseTensor3(np.einsum("i,j,k->ijk", x, y, z))
        for factor in init_hosvd(t, 3, seed=0):
            gram = factor.T @ factor
            assert np.abs(gram - np.eye(3)).max() < 1e-8


class TestCpAls:
    def test_exact_rank1_recovery_any_init(self):
        rng = np.random.default_rng(13)
        x = rng.random(6) + 0.5
        y = rng.random(7) + 0.5
        z = rng.random(3) + 0.5
        t = DenseTensor3(np.einsum("i,j,k->ijk", x, y, z))
        grid = GridSpec.full(1, 7)
        for init in ("random", "hosvd", "stpca"):
            opts = AlsOptions(rank=1, initializer=init, seed=0, fit_tolerance=1e-14)
            model, trace = cp_als(t, opts, grid=grid)
            assert trace.rel_errors[-1] < 1e-8, init

    def test_planted_rank3_best_of_5_random_seeds(self):
        t, _ = planted_tensor()
        best = np.inf
        for seed in range(5):
            opts = AlsOptions(rank=3, initializer="random", seed=seed, fit_tolerance=1e-14)
            _, trace = cp_als(t, opts)
            best = min(best, trace.rel_errors[-1])
            assert trace.iterations <= 500
        assert best < 1e-6

    def test_monotone_rel_errors(self):
        rng = np.random.default_rng(14)
        grid = GridSpec.full(3, 4)
        t = DenseTensor3(rng.random((15, 12, 3)))
        for init in ("random", "hosvd", "stpca"):
            for rank in (1, 2, 3):
                opts = AlsOptions(
                    rank=rank, initializer=init, seed=0, max_iters=40,
                    fit_tolerance=1e-9, stpca=None,
                )
                _, trace = cp_als(t, opts, grid=grid)
                assert (np.diff(trace.rel_errors) <= 1e-10).all(), (init, rank)

    def test_trace_deterministic(self):
        rng = np.random.default_rng(15)
        t = DenseTensor3(rng.random((10, 8, 3)))
        opts = AlsOptions(rank=2, initializer="random", seed=7, max_iters=30)
        _, tr1 = cp_als(t, opts)
        _, tr2 = cp_als(t, opts)
        np.testing.assert_array_equal(tr1.rel_errors, tr2.rel_errors)
        assert tr1.iterations == tr2.iterations
        assert tr1.stop_reason == tr2.stop_reason

    def test_returns_normalized_model(self):
        t, _ = planted_tensor(sigma=0.05)
        model, _ = cp_als(t, AlsOptions(rank=3, seed=1))
        assert (np.diff(model.weights) <= 0).all()
        for f in model.factors:
            np.testing.assert_allclose(np.linalg.norm(f, axis=0), 1.0, atol=1e-10)

    def test_final_trace_error_matches_model(self):
        from sttensor import relative_error

        t, _ = planted_tensor(sigma=0.1)
        model, trace = cp_als(t, AlsOptions(rank=2, seed=0, max_iters=50))
        direct = relative_error(cp_reconstruct(model), t)
        assert direct == pytest.approx(trace.rel_errors[-1], abs=1e-10)

    def test_zero_tensor_rejected(self):
        t = DenseTensor3(np.zeros((3, 3, 3)))
        with pytest.raises(ValueError):
            cp_als(t, AlsOptions(rank=1))

    def test_overflowing_values_raise_numeric_error(self):
        t = DenseTensor3(np.full((4, 4, 2), 1e200))
        with pytest.raises(NumericError):
            cp_als(t, AlsOptions(rank=2, seed=0))

    def test_stpca_requires_grid(self):
        t, _ = planted_tensor()
        with pytest.raises(ValueError):
            cp_als(t, AlsOptions(rank=2, initializer="stpca"))

    def test_stop_reasons(self):
        t, _ = planted_tensor(sigma=0.1)
        _, quick = cp_als(t, AlsOptions(rank=2, max_iters=3, fit_tolerance=1e-15))
        assert quick.stop_reason == "max_iters" and quick.iterations == 3
        _, full = cp_als(t, AlsOptions(rank=2, max_iters=500, fit_tolerance=1e-6))
        assert full.stop_reason == "converged"


class TestAlsOptionsValidation:
    def test_bad_rank(self):
        with pytest.raises(ValueError):
            AlsOptions(rank=0)

    def test_bad_tolerance(self):
        with pytest.raises(ValueError):
            AlsOptions(rank=1, fit_tolerance=0.0)

    def test_bad_initializer(self):
        with pytest.raises(ValueError):
            AlsOptions(rank=1, initializer="tucker")


class TestFactorMatching:
    """Planted-factor recovery is judged up to permutation and sign."""

    @staticmethod
    def greedy_match_cosines(found, planted):
        cos = np.abs(found.T @ planted)  # columns assumed unit norm
        scores = []
        available = list(range(cos.shape[0]))
        for col in range(cos.shape[1]):
            best = max(available, key=lambda r: cos[r, col])
            scores.append(cos[best, col])
            available.remove(best)
        return np.array(scores)

    def test_noiseless_planted_factors_recovered(self):
        t, truth = planted_tensor()
        model, trace = cp_als(t, AlsOptions(rank=3, initializer="hosvd", fit_tolerance=1e-14))
        assert trace.rel_errors[-1] < 1e-6
        for mode in range(3):
            scores = self.greedy_match_cosines(
                model.factors[mode], truth.model.factors[mode]
            )
            assert (scores > 0.99).all()
