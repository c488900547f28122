import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from core.errors import DimensionError, NonHermitianError
from core.numerics import (
    as_complex_matrix, complex_gaussian, herm_eig, inv_sqrt_psd, log2det_eye_plus, svd,
    waterfill, waterfill_gains,
)


class TestDecompositions:
    def test_svd_descending_and_reconstructs(self, rng):
        a = complex_gaussian(rng, 7, 4)
        result = svd(a)
        assert np.all(np.diff(result.singular_values) <= 0)
        rebuilt = result.left @ np.diag(result.singular_values) @ result.right.conj().T
        np.testing.assert_allclose(rebuilt, a, atol=1e-12)

    def test_svd_rejects_nan(self):
        with pytest.raises(DimensionError):
            svd(np.array([[1.0, np.nan]]))

    def test_herm_eig_descending(self, rng):
        a = complex_gaussian(rng, 6, 6)
        h = a + a.conj().T
        w, v = herm_eig(h)
        assert np.all(np.diff(w) <= 0)
        np.testing.assert_allclose(v @ np.diag(w) @ v.conj().T, h, atol=1e-10)

    def test_herm_eig_all_ones(self):
        w, _ = herm_eig(np.ones((2, 2)))
        np.testing.assert_allclose(w, [2.0, 0.0], atol=1e-12)

    def test_reconstruction_residuals(self, rng):
        for _ in range(100):
            m, n = (int(d) for d in rng.integers(1, 65, 2))
            a = complex_gaussian(rng, m, n)
            result = svd(a)
            rebuilt = result.left @ np.diag(result.singular_values) @ result.right.conj().T
            assert np.linalg.norm(rebuilt - a) < 1e-9 * max(np.linalg.norm(a), 1.0)
            h = a.conj().T @ a
            w, v = herm_eig(h)
            assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - h) < 1e-9 * max(np.linalg.norm(h), 1.0)

    def test_herm_eig_rejects_non_hermitian(self):
        with pytest.raises(NonHermitianError):
            herm_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_inv_sqrt_psd(self, rng):
        a = complex_gaussian(rng, 5, 5)
        q = a @ a.conj().T + np.eye(5)
        x = inv_sqrt_psd(q)
        np.testing.assert_allclose(x @ q @ x, np.eye(5), atol=1e-10)

    def test_vector_becomes_column(self):
        assert as_complex_matrix([1, 2, 3]).shape == (3, 1)


class TestLogDet:
    def test_scalar(self):
        assert log2det_eye_plus(np.array([[3.0]])) == pytest.approx(2.0)

    def test_empty(self):
        assert log2det_eye_plus(np.zeros((0, 0))) == 0.0


class TestWaterfill:
    def test_equal_channels_split_evenly(self):
        np.testing.assert_allclose(waterfill_gains([1.0, 1.0], 1.0, 2.0), [1.0, 1.0])

    def test_weak_channel_left_dry(self):
        powers = waterfill_gains([10.0, 0.01], 1.0, 1.0)
        assert powers[1] == 0.0
        assert powers[0] == pytest.approx(1.0)

    def test_zero_budget(self):
        result = waterfill([1.0, 2.0], [1.0, 1.0], 1.0, 0.0)
        assert result.total == 0.0
        assert result.active_set == ()

    def test_noiseless_closed_form(self):
        q = np.array([0.5, 2.0, 1.0])
        beta = np.array([1.0, 3.0, 2.0])
        budget = 6.0
        result = waterfill(q, beta, 0.0, budget)
        expected = beta * budget / (q * beta.sum())
        np.testing.assert_allclose(result.powers, expected, rtol=1e-12)

    def test_rejects_nonpositive_costs(self):
        with pytest.raises(DimensionError):
            waterfill([1.0, 0.0], [1.0, 1.0], 1.0, 1.0)

    def test_budget_below_float_resolution(self):
        result = waterfill([1e-3, 1e3], [1.0, 1.0], 1.0, 1e-300)
        assert result.active_set == (0,)
        assert result.powers[1] == 0.0
        assert np.all(result.powers >= 0)

    @given(
        st.lists(st.tuples(st.floats(0.01, 100.0), st.floats(0.1, 10.0)), min_size=1, max_size=8),
        st.floats(1e-3, 10.0),
        st.floats(1e-3, 100.0),
        st.floats(1.0, 10.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_budget(self, pairs, noise, budget, growth):
        q = np.array([p[0] for p in pairs])
        beta = np.array([p[1] for p in pairs])
        small = waterfill(q, beta, noise, budget).powers
        large = waterfill(q, beta, noise, budget * growth).powers
        assert np.all(small <= large * (1 + 1e-9) + 1e-12)

    @given(
        st.lists(st.tuples(st.floats(0.01, 100.0), st.floats(0.1, 10.0)), min_size=1, max_size=8),
        st.floats(1e-3, 10.0),
        st.floats(1e-3, 100.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_budget_and_kkt(self, pairs, noise, budget):
        q = np.array([p[0] for p in pairs])
        beta = np.array([p[1] for p in pairs])
        result = waterfill(q, beta, noise, budget)
        mu = result.water_level

        assert np.all(result.powers >= 0)
        assert float(q @ result.powers) == pytest.approx(budget, rel=1e-9, abs=1e-12)
        for k in range(q.size):
            if k in result.active_set:
                assert result.powers[k] == pytest.approx((beta[k] * mu - q[k] * noise) / q[k],
                                                         rel=1e-9, abs=1e-12)
            else:
                # complementary slackness: a dry index sits at or above the water level
                assert beta[k] * mu <= q[k] * noise * (1 + 1e-9)


class TestComplexGaussian:
    def test_seeded_reproducible(self):
        a = complex_gaussian(np.random.default_rng(3), 4, 2)
        b = complex_gaussian(np.random.default_rng(3), 4, 2)
        np.testing.assert_array_equal(a, b)

    def test_unit_variance(self, rng):
        samples = complex_gaussian(rng, 20000, 1)
        assert np.mean(np.abs(samples) ** 2) == pytest.approx(1.0, rel=0.05)

    def test_real_part_variance(self, rng):
        samples = complex_gaussian(rng, 100000, 1)
        assert 0.49 <= np.var(samples.real) <= 0.51
