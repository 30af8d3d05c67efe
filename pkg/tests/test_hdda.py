import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdkernel.exceptions import ConfigError, DimensionMismatchError, InsufficientSamplesError
from hdkernel.hdda import (
    HddaClassModel,
    estimate_spectrum,
    fit_hdda,
    full_param_count,
    hdda_param_count,
    mahalanobis_sq,
    scree_select,
)

from conftest import exact_model, random_orthonormal


class TestEstimateSpectrum:
    def test_two_points_by_hand(self):
        est = estimate_spectrum(np.array([[1.0, 0.0], [-1.0, 0.0]]))
        np.testing.assert_array_equal(est.mean, [0.0, 0.0])
        np.testing.assert_allclose(est.eigvals, [1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(np.abs(est.basis[:, 0]), [1.0, 0.0], atol=1e-15)
        assert est.trace == 1.0

    def test_gram_path_matches_dense_eigendecomposition(self, rng):
        X = rng.standard_normal((20, 200)) * rng.uniform(0.5, 3.0, 200)
        est = estimate_spectrum(X)
        Xc = X - X.mean(axis=0)
        dense = np.sort(np.linalg.eigvalsh(Xc.T @ Xc / 20))[::-1][: est.eigvals.size]
        top = dense > 1e-10 * dense[0]
        np.testing.assert_allclose(est.eigvals[top], dense[top], rtol=1e-8)
        assert est.trace == pytest.approx(np.trace(Xc.T @ Xc / 20), rel=1e-12)

    def test_gram_path_vectors_are_eigenvectors(self, rng):
        X = rng.standard_normal((15, 60))
        est = estimate_spectrum(X, m=10)
        Xc = X - X.mean(axis=0)
        cov = Xc.T @ Xc / 15
        np.testing.assert_allclose(cov @ est.basis, est.basis * est.eigvals, atol=1e-10)

    def test_identical_samples(self):
        est = estimate_spectrum(np.tile([1.0, 2.0, 3.0], (5, 1)))
        np.testing.assert_array_equal(est.eigvals, np.zeros(3))
        assert est.trace == 0.0

    def test_identical_samples_gram_path(self):
        est = estimate_spectrum(np.tile(np.arange(10.0), (4, 1)))
        np.testing.assert_array_equal(est.eigvals, 0.0)
        np.testing.assert_allclose(est.basis.T @ est.basis, np.eye(4), atol=1e-12)

    def test_rejects_single_sample(self):
        with pytest.raises(InsufficientSamplesError):
            estimate_spectrum(np.ones((1, 4)))

    def test_sign_convention(self, rng):
        est = estimate_spectrum(rng.standard_normal((50, 8)))
        idx = np.argmax(np.abs(est.basis), axis=0)
        assert np.all(est.basis[idx, np.arange(est.basis.shape[1])] > 0)


class TestScree:
    def test_worked_example(self):
        res = scree_select([100, 50, 10, 1, 0.9, 0.8, 0.7], 0.1)
        np.testing.assert_allclose(res.gaps, [50, 40, 9, 0.1, 0.1, 0.1], atol=1e-12)
        assert res.threshold == pytest.approx(5.0)
        assert res.p_hat == 4

    def test_flat_tail(self):
        res = scree_select([10, 1, 1, 1], 0.5)
        assert res.threshold == pytest.approx(4.5)
        assert res.p_hat == 2

    def test_degenerate(self):
        res = scree_select([5, 5, 5], 0.1)
        assert res.degenerate and res.p_hat == 1

    def test_clamped_to_length_minus_one(self):
        assert scree_select([10, 9, 8, 0.5], 0.1).p_hat == 3

    def test_rank_deficient_tail_ignored(self):
        with_zeros = scree_select([10, 4, 3.9, 3.8, 1e-14, 0.0], 0.2).p_hat
        assert with_zeros == scree_select([10, 4, 3.9, 3.8], 0.2).p_hat

    @pytest.mark.parametrize("s", [0.0, 1.0, -0.1])
    def test_threshold_range(self, s):
        with pytest.raises(ConfigError):
            scree_select([3, 2, 1], s)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(1e-3, 1e3), min_size=2, max_size=30),
        st.floats(1e-3, 1e3),
        st.floats(0.01, 0.99),
    )
    def test_scale_invariance(self, values, scale, s):
        lam = np.sort(np.array(values))[::-1]
        assert scree_select(lam, s).p_hat == scree_select(lam * scale, s).p_hat


class TestFit:
    def test_recovers_generating_model(self, rng):
        d = 10
        Q = random_orthonormal(rng, d, d)
        cov = (Q * np.array([9.0, 4.0] + [1.0] * (d - 2))) @ Q.T
        X = rng.multivariate_normal(np.zeros(d), cov, size=10000)
        m = fit_hdda(X, p_override=2)
        np.testing.assert_allclose(m.eigvals, [9.0, 4.0], rtol=0.1)
        assert m.noise == pytest.approx(1.0, rel=0.1)
        np.testing.assert_allclose(m.basis.T @ m.basis, np.eye(2), atol=1e-8)

    def test_noise_formula(self):
        # trace 20, leading eigenvalues (8, 6), d = 9 -> b = (20 - 14) / 7
        d = 9
        lam = np.array([8.0, 6.0])
        Q = random_orthonormal(np.random.default_rng(0), d, d)
        evals = np.concatenate([lam, np.full(d - 2, 6 / 7)])
        L = np.linalg.cholesky((Q * evals) @ Q.T)
        # +-sqrt(d) L e_k has empirical covariance exactly L L^T (1/n normalization)
        Z = np.concatenate([np.eye(d), -np.eye(d)]) * np.sqrt(d)
        samples = Z @ L.T
        m = fit_hdda(samples, p_override=2)
        np.testing.assert_allclose(m.eigvals, lam, rtol=1e-12)
        assert m.noise == pytest.approx(6 / 7, rel=1e-12)

    def test_floor_on_degenerate_spectrum(self):
        # rank-1 data with p = 2 exhausts the trace
        X = np.outer(np.array([-1.0, 0.0, 1.0, 2.0]), [1.0, 2.0, 0.0])
        m = fit_hdda(X, p_override=2)
        assert m.noise_floored
        assert m.noise >= 1e-12 and np.all(m.eigvals > 0)

    def test_scree_used_by_default(self, rng):
        d = 30
        Q = random_orthonormal(rng, d, d)
        evals = np.array([50.0, 30.0, 20.0] + [0.5] * (d - 3))
        X = rng.multivariate_normal(np.zeros(d), (Q * evals) @ Q.T, size=2000)
        m = fit_hdda(X, s=0.2)
        assert m.scree is not None
        assert 3 <= m.p_hat <= 5

    def test_errors(self, rng):
        with pytest.raises(InsufficientSamplesError):
            fit_hdda(rng.standard_normal((2, 5)))
        with pytest.raises(ConfigError):
            fit_hdda(rng.standard_normal((10, 5)), p_override=5)
        with pytest.raises(ConfigError):
            fit_hdda(rng.standard_normal((4, 50)), p_override=4)

    def test_stores_only_signal_eigenpairs(self, rng):
        m = fit_hdda(rng.standard_normal((40, 12)), p_override=3)
        assert m.basis.shape == (12, 3) and m.eigvals.shape == (3,)

    def test_serialization_roundtrip(self, rng):
        m = fit_hdda(rng.standard_normal((40, 12)), p_override=3, class_id=2)
        back = HddaClassModel.from_dict(m.to_dict())
        np.testing.assert_array_equal(back.basis, m.basis)
        np.testing.assert_array_equal(back.eigvals, m.eigvals)
        assert back.noise == m.noise and back.class_id == 2


class TestMahalanobis:
    def test_zero_on_identical(self, rng):
        model, _ = exact_model(rng, 8, 3)
        x = rng.standard_normal(8)
        assert mahalanobis_sq(model, x, x) == 0.0

    def test_matches_dense_inverse(self, rng):
        model, sigma = exact_model(rng, 40, 6)
        inv = np.linalg.inv(sigma)
        X = rng.standard_normal((100, 40))
        Z = rng.standard_normal((100, 40))
        delta = X - Z
        expected = np.einsum("ij,jk,ik->i", delta, inv, delta)
        np.testing.assert_allclose(mahalanobis_sq(model, X, Z), expected, rtol=1e-8)

    def test_empty_signal_reduces_to_scaled_euclidean(self, rng):
        model = HddaClassModel.from_covariance_parts(np.zeros(0), np.zeros((5, 0)), 2.0)
        x, z = rng.standard_normal(5), rng.standard_normal(5)
        assert mahalanobis_sq(model, x, z) == pytest.approx(np.sum((x - z) ** 2) / 2.0, rel=1e-14)

    def test_symmetric_and_translation_invariant(self, rng):
        model, _ = exact_model(rng, 12, 4)
        x, z, t = (rng.integers(-8, 8, 12).astype(float) for _ in range(3))
        assert mahalanobis_sq(model, x, z) == mahalanobis_sq(model, z, x)
        assert mahalanobis_sq(model, x + t, z + t) == mahalanobis_sq(model, x, z)

    def test_dimension_mismatch(self, rng):
        model, _ = exact_model(rng, 6, 2)
        with pytest.raises(DimensionMismatchError):
            mahalanobis_sq(model, np.zeros(5), np.zeros(5))


class TestParamCounts:
    def test_reported_values(self):
        assert hdda_param_count(100, 10) == 1056
        assert full_param_count(100) == 5150

    def test_small(self):
        assert hdda_param_count(2, 1) == 5

    def test_range(self):
        with pytest.raises(ConfigError):
            hdda_param_count(5, 5)
