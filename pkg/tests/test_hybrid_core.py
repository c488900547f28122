import numpy as np
import pytest
from conftest import random_unit_modulus
from hypothesis import given, settings, strategies as st

from core.errors import ConfigError, DesignError, DimensionError, SingularMatrixError
from core.hybrid_core import (
    HybridCombiner, HybridPrecoder, PhaseSet, SystemConfig, UserCombiner, quantize_beamformer,
    quantize_phase, rate_general, rate_miso, rate_p2p, realize_fully_digital,
)
from core.miso_design import power_alloc_zf, zf_digital
from core.numerics import complex_gaussian, log2det_eye_plus, svd


class TestSystemConfig:
    def test_defaults(self):
        cfg = SystemConfig(n_bs_antennas=8, n_users=2, n_rf_tx=3)
        assert cfg.weights == (1.0, 1.0)
        assert cfg.n_streams == 2
        assert cfg.phase_set is None

    def test_rf_chains_above_antennas(self):
        with pytest.raises(ConfigError, match="n_rf_tx"):
            SystemConfig(n_bs_antennas=4, n_rf_tx=5)

    def test_too_few_rf_chains(self):
        with pytest.raises(ConfigError, match="n_rf_tx"):
            SystemConfig(n_bs_antennas=8, n_users=3, n_rf_tx=2)

    def test_receive_chains(self):
        with pytest.raises(ConfigError, match="n_rf_rx"):
            SystemConfig(n_bs_antennas=8, n_user_antennas=2, streams_per_user=2, n_rf_tx=2, n_rf_rx=3)

    @pytest.mark.parametrize("field,value", [("power", -1.0), ("noise_power", 0.0), ("weights", (1.0, 0.0))])
    def test_physical_constraints(self, field, value):
        kwargs = {"n_bs_antennas": 8, "n_users": 2, "n_rf_tx": 2, field: value}
        with pytest.raises(ConfigError, match=field):
            SystemConfig(**kwargs)

    def test_with_power(self):
        cfg = SystemConfig(n_bs_antennas=4).with_power(10.0)
        assert cfg.power == 10.0
        assert cfg.snr_db == pytest.approx(10.0)


class TestQuantizer:
    def test_one_bit_near_zero(self):
        assert quantize_phase(np.exp(0.3j), PhaseSet(1)) == 1

    def test_one_bit_near_pi(self):
        assert quantize_phase(np.exp(3.0j), PhaseSet(1)) == pytest.approx(-1)

    def test_tie_goes_to_smaller_exponent(self):
        assert quantize_phase(np.exp(1j * np.pi / 4), PhaseSet(2)) == pytest.approx(1)

    def test_wrapping_tie_goes_to_one(self):
        assert quantize_phase(np.exp(-1j * np.pi / 2), PhaseSet(1)) == pytest.approx(1)

    def test_zero_maps_to_one(self):
        assert quantize_phase(0j, PhaseSet(3)) == 1

    def test_alphabet_closed_under_conjugation(self):
        alphabet = PhaseSet(3).alphabet
        np.testing.assert_allclose(np.abs(alphabet), 1.0)
        for a in alphabet:
            assert np.min(np.abs(alphabet - np.conj(a))) < 1e-12

    def test_all_ones_unchanged(self):
        ones = np.ones((4, 3), dtype=complex)
        for bits in (1, 2, 5):
            np.testing.assert_array_equal(quantize_beamformer(ones, PhaseSet(bits)), ones)

    def test_fine_resolution_perturbation(self, rng):
        v = random_unit_modulus(rng, 16, 4)
        q = quantize_beamformer(v, PhaseSet(16))
        drift = np.abs(np.angle(q * np.conj(v)))
        assert np.max(drift) <= np.pi / 2 ** 16 + 1e-12

    def test_one_bit_preserves_signs(self):
        v = np.array([[np.exp(0.1j), -np.exp(0.1j)], [-np.exp(-0.1j), np.exp(-0.1j)]])
        np.testing.assert_allclose(quantize_beamformer(v, PhaseSet(1)), [[1, -1], [-1, 1]], atol=1e-12)

    @given(st.floats(-10.0, 10.0), st.integers(1, 6))
    @settings(max_examples=200, deadline=None)
    def test_nearest_member(self, angle, bits):
        phase_set = PhaseSet(bits)
        z = np.exp(1j * angle)
        chosen = quantize_phase(z, phase_set)
        distances = np.abs(np.angle(phase_set.alphabet * np.conj(z)))
        assert abs(np.angle(chosen * np.conj(z))) <= distances.min() + 1e-9


class TestPrecoderTypes:
    def test_immutable(self):
        p = HybridPrecoder(np.ones((4, 2)), np.eye(2))
        with pytest.raises(ValueError):
            p.v_rf[0, 0] = 2.0

    def test_unit_modulus_enforced(self):
        with pytest.raises(DimensionError):
            HybridPrecoder(np.full((4, 2), 0.5), np.eye(2))

    def test_unit_modulus_tolerance_is_tight(self):
        off = np.ones((4, 2), dtype=complex)
        off[1, 1] = 1.0 + 1e-10
        with pytest.raises(DimensionError):
            HybridPrecoder(off, np.eye(2))
        with pytest.raises(DimensionError):
            UserCombiner(off, np.eye(2))
        HybridPrecoder(np.exp(1j * np.linspace(0, 6, 8)).reshape(4, 2), np.eye(2))

    def test_shapes_must_chain(self):
        with pytest.raises(DimensionError):
            HybridPrecoder(np.ones((4, 2)), np.eye(3))

    def test_transmit_power(self):
        p = HybridPrecoder(np.ones((4, 1)), np.array([[0.5]]))
        assert p.transmit_power == pytest.approx(1.0)
        assert p.satisfies_power(1.0)


class TestRates:
    def test_scalar_general(self):
        power = 7.0
        rates, total = rate_general([np.array([[1.0]])], np.array([[np.sqrt(power)]]), [np.array([[1.0]])], 1.0)
        assert total == pytest.approx(np.log2(1 + power))

    def test_zero_digital_precoder(self, rng):
        h = [complex_gaussian(rng, 2, 6) for _ in range(2)]
        p = HybridPrecoder(random_unit_modulus(rng, 6, 3), np.zeros((3, 2)))
        rates, total = rate_general(h, p, None, 1.0)
        np.testing.assert_allclose(rates, 0.0, atol=1e-9)
        assert total == pytest.approx(0.0, abs=1e-9)

    def test_scalar_p2p(self):
        assert rate_p2p([[1.0]], [[np.sqrt(3.0)]], [[1.0]], 1.0) == pytest.approx(2.0)

    def test_p2p_full_digital_receive(self, rng):
        h = complex_gaussian(rng, 6, 8)
        v = complex_gaussian(rng, 8, 3)
        expected = log2det_eye_plus(h @ v @ v.conj().T @ h.conj().T / 2.0)
        assert rate_p2p(h, v, np.eye(6), 2.0) == pytest.approx(expected, rel=1e-10)

    def test_p2p_matches_general(self, rng):
        h = complex_gaussian(rng, 8, 8)
        v = complex_gaussian(rng, 8, 2)
        w = complex_gaussian(rng, 8, 2)
        _, general = rate_general([h], v, [w], 0.5)
        assert rate_p2p(h, v, w, 0.5) == pytest.approx(general, rel=1e-8)

    def test_p2p_singular_combiner(self, rng):
        h = complex_gaussian(rng, 4, 4)
        w = np.ones((4, 2))
        with pytest.raises(SingularMatrixError):
            rate_p2p(h, complex_gaussian(rng, 4, 2), w, 1.0)

    def test_miso_single_user(self, rng):
        h = complex_gaussian(rng, 1, 8)
        v = complex_gaussian(rng, 8, 1)
        rates, _ = rate_miso(h, v, 2.0)
        assert rates[0] == pytest.approx(np.log2(1 + abs((h @ v)[0, 0]) ** 2 / 2.0))

    def test_miso_zero_forcing_rates(self, rng):
        h = complex_gaussian(rng, 3, 16)
        v_rf = random_unit_modulus(rng, 16, 4)
        powers = np.array([0.5, 2.0, 1.0])
        precoder = HybridPrecoder(v_rf, zf_digital(h, v_rf, powers))
        rates, _ = rate_miso(h, precoder, 1.0)
        np.testing.assert_allclose(rates, np.log2(1 + powers), rtol=1e-9)

    def test_miso_matches_general(self, rng):
        h = complex_gaussian(rng, 3, 10)
        v = complex_gaussian(rng, 10, 3)
        weights = [1.0, 2.0, 0.5]
        miso_rates, miso_total = rate_miso(h, v, 0.7, weights)
        general_rates, general_total = rate_general([row[None, :] for row in h], v, None, 0.7, weights)
        np.testing.assert_allclose(miso_rates, general_rates, rtol=1e-9)
        assert miso_total == pytest.approx(general_total, rel=1e-9)

    def test_hybrid_combiner_path(self, rng):
        h = complex_gaussian(rng, 4, 6)
        precoder = HybridPrecoder(random_unit_modulus(rng, 6, 2), complex_gaussian(rng, 2, 2))
        combiner = UserCombiner(random_unit_modulus(rng, 4, 2), complex_gaussian(rng, 2, 2))
        _, hybrid = rate_general([h], precoder, HybridCombiner((combiner,)), 1.0)
        _, plain = rate_general([h], precoder.effective, [combiner.effective], 1.0)
        assert hybrid == pytest.approx(plain)

    def test_common_phase_invariance(self, rng):
        h = [complex_gaussian(rng, 2, 6) for _ in range(2)]
        v = complex_gaussian(rng, 6, 4)
        w = [complex_gaussian(rng, 2, 2) for _ in range(2)]
        base, _ = rate_general(h, v, w, 1.0)
        rot = np.exp(0.77j)
        turned, _ = rate_general(h, v * rot, [x * rot for x in w], 1.0)
        np.testing.assert_allclose(base, turned, rtol=1e-9)
        assert np.all(base >= 0)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(DimensionError):
            rate_general([complex_gaussian(rng, 2, 5)], complex_gaussian(rng, 6, 1), None, 1.0)


class TestExactRealization:
    def test_two_element_example(self):
        p = realize_fully_digital(np.array([[0.5], [1.0]]))
        assert p.n_rf == 2
        delta = np.arccos(0.25)
        np.testing.assert_allclose(np.angle(p.v_rf[0]), [-delta, delta], atol=1e-12)
        np.testing.assert_allclose(np.angle(p.v_rf[1]), [-np.pi / 3, np.pi / 3], atol=1e-12)
        np.testing.assert_allclose(p.effective, [[0.5], [1.0]], atol=1e-12)

    def test_random_full_rank(self, rng):
        v_fd = complex_gaussian(rng, 64, 4)
        p = realize_fully_digital(v_fd)
        assert p.n_rf == 8
        assert np.linalg.norm(p.effective - v_fd) / np.linalg.norm(v_fd) < 1e-10
        assert p.transmit_power == pytest.approx(np.linalg.norm(v_fd) ** 2, rel=1e-9)

    def test_rank_one(self, rng):
        v_fd = complex_gaussian(rng, 64, 1) @ complex_gaussian(rng, 1, 4)
        p = realize_fully_digital(v_fd)
        assert p.n_rf == 2
        assert np.linalg.norm(p.effective - v_fd) / np.linalg.norm(v_fd) < 1e-10

    def test_zero_row_needs_no_special_case(self):
        v_fd = np.array([[1.0], [0.0], [0.5j]])
        np.testing.assert_allclose(realize_fully_digital(v_fd).effective, v_fd, atol=1e-12)

    def test_padding_spare_chains(self, rng):
        v_fd = complex_gaussian(rng, 8, 2)
        p = realize_fully_digital(v_fd, n_rf=6)
        assert p.n_rf == 6
        np.testing.assert_allclose(p.effective, v_fd, atol=1e-10)
        with pytest.raises(DesignError):
            realize_fully_digital(v_fd, n_rf=3)

    def test_all_zero_rejected(self):
        with pytest.raises(DesignError):
            realize_fully_digital(np.zeros((4, 2)))

    def test_too_few_rf_chains_cannot_be_exact(self, rng):
        v_fd = complex_gaussian(rng, 16, 4)
        s = svd(v_fd).singular_values
        bound = np.sqrt(np.sum(s[2:] ** 2)) / np.linalg.norm(v_fd)
        v_rf = random_unit_modulus(rng, 16, 2)
        v_d = np.linalg.pinv(v_rf) @ v_fd
        product = HybridPrecoder(v_rf, v_d).effective
        assert np.linalg.matrix_rank(product) <= 2
        assert bound > 0.1
        assert np.linalg.norm(product - v_fd) / np.linalg.norm(v_fd) >= bound - 1e-12

    def test_realized_power_allocation_keeps_zf_budget(self, rng):
        h = complex_gaussian(rng, 3, 12)
        v_rf = random_unit_modulus(rng, 12, 4)
        allocation = power_alloc_zf(h, v_rf, [1, 1, 1], 1.0, 5.0)
        precoder = HybridPrecoder(v_rf, zf_digital(h, v_rf, allocation.powers))
        realized = realize_fully_digital(precoder.effective)
        assert realized.transmit_power == pytest.approx(5.0, rel=1e-9)
