import numpy as np
import pytest

from bsaomp import SystemConfig
from bsaomp.arrays import relative_frequency, steering_vector
from bsaomp.beamforming import (array_gain_spectrum, design_hybrid,
                                digital_beamformers, sum_rate,
                                unconstrained_combiner,
                                unconstrained_precoder)
from bsaomp.channel import PathSet, sample_paths, wideband_channels
from bsaomp.dictionary import BsaDictionary, build_physical_grid

CFG = SystemConfig(300e9, 30e9, 8, 32, 8, 2, 2, 2, 128, 8, 8)
SIN60 = np.sin(np.radians(60.0))


def _rank_one_channel(n_rx, n_tx, doa, dod, scale=1.0):
    return scale * np.outer(steering_vector(doa, n_rx),
                            steering_vector(dod, n_tx).conj())


class TestUnconstrainedPrecoder:
    def test_rank_one_channel_recovers_transmit_direction(self):
        h = _rank_one_channel(8, 32, 0.3, -0.6)
        f = unconstrained_precoder(h)
        reference = steering_vector(-0.6, 32) / np.sqrt(32)
        assert abs(np.vdot(reference, f)) == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.norm(f) == pytest.approx(1.0, abs=1e-12)

    def test_maximizes_channel_gain(self):
        rng = np.random.default_rng(0)
        h = rng.standard_normal((8, 32)) + 1j * rng.standard_normal((8, 32))
        f = unconstrained_precoder(h)
        best = np.linalg.norm(h @ f)
        for _ in range(1000):
            x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
            x /= np.linalg.norm(x)
            assert np.linalg.norm(h @ x) <= best + 1e-9

    def test_gain_equals_top_singular_value(self):
        rng = np.random.default_rng(1)
        h = rng.standard_normal((4, 16)) + 1j * rng.standard_normal((4, 16))
        f = unconstrained_precoder(h)
        assert np.linalg.norm(h @ f) == pytest.approx(
            np.linalg.svd(h, compute_uv=False)[0], rel=1e-12)

    def test_single_path_center_subcarrier_alignment(self):
        cfg = CFG.with_updates(num_subcarriers=15, num_paths=1,
                               num_users=1, num_rf_chains=1)
        paths = PathSet([[0.44]], [[-0.2]], [[1.0]], [[3e-9]])
        channels = wideband_channels(paths, cfg)
        f = unconstrained_precoder(channels[0, 7])  # center, eta == 1
        reference = steering_vector(-0.2, 32) / np.sqrt(32)
        assert abs(np.vdot(reference, f)) == pytest.approx(1.0, abs=1e-10)

    def test_zero_channel_rejected(self):
        with pytest.raises(ValueError):
            unconstrained_precoder(np.zeros((4, 8)))


class TestUnconstrainedCombiner:
    def test_large_noise_shrinks_to_zero(self):
        h = _rank_one_channel(8, 32, 0.3, -0.6)
        f = unconstrained_precoder(h)
        w = unconstrained_combiner(h, f, rho=1.0, noise_var=1e12)
        assert np.linalg.norm(w) < 1e-9

    def test_noiseless_rank_one_matches_receive_steering(self):
        h = _rank_one_channel(8, 32, 0.3, -0.6)
        f = unconstrained_precoder(h)
        w = unconstrained_combiner(h, f, rho=1.0, noise_var=0.0)
        reference = steering_vector(0.3, 8)
        cos = abs(np.vdot(reference, w)) / (np.linalg.norm(reference)
                                            * np.linalg.norm(w))
        assert cos == pytest.approx(1.0, abs=1e-10)

    def test_scaling_degree_matches_formula(self):
        # noiseless: w(c*H) = (1/c) * w(H) since the denominator is
        # quadratic and the numerator linear in the channel
        h = _rank_one_channel(8, 32, 0.1, 0.7, scale=1.3)
        f = unconstrained_precoder(h)
        w1 = unconstrained_combiner(h, f, 1.0, 0.0)
        w2 = unconstrained_combiner(2 * h, f, 1.0, 0.0)
        assert np.allclose(w2, w1 / 2, atol=1e-12)


class TestDesignHybrid:
    def test_single_path_atoms_match_truth(self):
        cfg = CFG.with_updates(num_users=1, num_rf_chains=1, num_paths=1)
        grid = build_physical_grid(cfg.grid_size).points
        q_rx, q_tx = 30, 100
        paths = PathSet([[grid[q_rx]]], [[grid[q_tx]]], [[1.0 + 0.4j]],
                        [[4e-9]])
        channels = wideband_channels(paths, cfg)
        dic = BsaDictionary(cfg)
        bf = design_hybrid(channels, dic, cfg, 1.0, 0.1)
        assert bf.rx_atom_idx[0] == q_rx
        assert bf.tx_atom_idx[0] == q_tx

    def test_constant_modulus_and_power_normalization(self):
        paths = sample_paths(CFG, 3, "on_grid", min_separation_cells=20)
        channels = wideband_channels(paths, CFG)
        dic = BsaDictionary(CFG)
        bf = design_hybrid(channels, dic, CFG, 1.0, 0.01)
        assert np.max(np.abs(np.abs(bf.analog_precoder) - 1 / np.sqrt(32))) < 1e-12
        assert np.max(np.abs(np.abs(bf.analog_combiners) - 1 / np.sqrt(8))) < 1e-12
        for mi in range(CFG.num_subcarriers):
            assert np.linalg.norm(bf.analog_precoder @ bf.baseband[mi]) \
                == pytest.approx(1.0, abs=1e-12)

    def test_baseband_zero_forces_effective_channel(self):
        paths = sample_paths(CFG, 4, "on_grid", min_separation_cells=25)
        channels = wideband_channels(paths, CFG)
        dic = BsaDictionary(CFG)
        bf = design_hybrid(channels, dic, CFG, 1.0, 0.01)
        for mi in (0, 5):
            h_eff = np.stack([
                bf.analog_combiners[:, k].conj() @ channels[k, mi]
                @ bf.analog_precoder for k in range(2)])
            product = h_eff @ bf.baseband[mi]
            diag_scale = np.abs(np.diag(product)).min()
            off = product - np.diag(np.diag(product))
            assert np.max(np.abs(off)) < 1e-8 * diag_scale

    def test_single_user_baseband_is_scalar_inverse(self):
        cfg = CFG.with_updates(num_users=1, num_rf_chains=1, num_paths=1)
        paths = sample_paths(cfg, 5, "on_grid")
        channels = wideband_channels(paths, cfg)
        dic = BsaDictionary(cfg)
        bf = design_hybrid(channels, dic, cfg, 1.0, 0.1)
        for mi in range(cfg.num_subcarriers):
            h_eff = bf.analog_combiners[:, 0].conj() @ channels[0, mi] \
                @ bf.analog_precoder
            # baseband equals 1/h_eff up to the power normalization
            expected = (1.0 / h_eff) / np.linalg.norm(
                bf.analog_precoder * (1.0 / h_eff))
            assert bf.baseband[mi][0, 0] == pytest.approx(expected, rel=1e-9)

    def test_atom_selection_invariant_to_common_scaling(self):
        paths = sample_paths(CFG, 6, "on_grid", min_separation_cells=20)
        channels = wideband_channels(paths, CFG)
        dic = BsaDictionary(CFG)
        a = design_hybrid(channels, dic, CFG, 1.0, 0.01)
        b = design_hybrid(channels * 3.0, dic, CFG, 1.0, 0.01)
        assert np.array_equal(a.rx_atom_idx, b.rx_atom_idx)
        assert np.array_equal(a.tx_atom_idx, b.tx_atom_idx)

    def test_user_count_must_match_rf_chains(self):
        channels = np.ones((3, 8, 8, 32), dtype=complex)
        with pytest.raises(ValueError):
            design_hybrid(channels, BsaDictionary(CFG), CFG, 1.0, 0.1)


class TestSumRate:
    def _hybrid(self, seed=7):
        paths = sample_paths(CFG, seed, "on_grid", min_separation_cells=25)
        channels = wideband_channels(paths, CFG)
        dic = BsaDictionary(CFG)
        return channels, design_hybrid(channels, dic, CFG, 1.0, 0.1)

    def test_zero_power_gives_zero_rate(self):
        channels, bf = self._hybrid()
        assert sum_rate(channels, bf, 0.0, 0.1) == 0.0

    def test_rate_positive_and_monotone_in_power(self):
        channels, bf = self._hybrid()
        rates = [sum_rate(channels, bf, rho, 0.1) for rho in (0.5, 1, 2, 4)]
        assert rates[0] > 0
        assert np.all(np.diff(rates) > 0)

    def test_single_user_rate_formula(self):
        cfg = CFG.with_updates(num_users=1, num_rf_chains=1)
        paths = sample_paths(cfg, 8, "on_grid", min_separation_cells=20)
        channels = wideband_channels(paths, cfg)
        dic = BsaDictionary(cfg)
        bf = design_hybrid(channels, dic, cfg, 1.0, 0.1)
        expected = 0.0
        for mi in range(cfg.num_subcarriers):
            w = bf.analog_combiners[:, 0]
            gain = abs(w.conj() @ channels[0, mi]
                       @ (bf.analog_precoder @ bf.baseband[mi])[:, 0]) ** 2
            expected += np.log2(1 + 1.0 * gain
                                / (0.1 * np.linalg.norm(w) ** 2))
        expected /= cfg.num_subcarriers
        assert sum_rate(channels, bf, 1.0, 0.1) == pytest.approx(expected,
                                                                 rel=1e-12)

    def test_digital_benchmark_dominates_hybrid(self):
        dic = BsaDictionary(CFG)
        wins = 0
        trials = 40
        for seed in range(trials):
            paths = sample_paths(CFG, 100 + seed, "on_grid",
                                 min_separation_cells=25)
            channels = wideband_channels(paths, CFG)
            noise_var = 0.1
            hybrid = design_hybrid(channels, dic, CFG, 1.0, noise_var)
            digital = digital_beamformers(channels, 1.0, noise_var)
            if sum_rate(channels, digital, 1.0, noise_var) >= \
                    sum_rate(channels, hybrid, 1.0, noise_var):
                wins += 1
        assert wins >= 0.95 * trials

    def test_bad_beamformer_type_rejected(self):
        channels, _ = self._hybrid()
        with pytest.raises(TypeError):
            sum_rate(channels, object(), 1.0, 0.1)

    def test_noise_free_rate_rejected(self):
        channels, bf = self._hybrid()
        with pytest.raises(ValueError):
            sum_rate(channels, bf, 1.0, 0.0)


class TestArrayGainSpectrum:
    def test_matched_beam_peaks_at_pointing_direction(self):
        cfg = CFG.with_updates(num_subcarriers=15)
        n = cfg.bs_antennas
        probe = np.linspace(-1, 1, 2049)
        beam = steering_vector(0.5, n) / np.sqrt(n)
        gain = array_gain_spectrum(beam, cfg, 8, probe)  # center, eta == 1
        peak = probe[np.argmax(gain)]
        assert abs(peak - 0.5) <= 2 / 2048
        assert gain.max() == pytest.approx(1.0, abs=1e-6)

    def test_flat_beam_displaced_by_split_at_band_edge(self):
        n = CFG.bs_antennas
        probe = np.linspace(-1, 1, 4097)
        beam = steering_vector(SIN60, n) / np.sqrt(n)
        m = CFG.num_subcarriers  # high edge, eta > 1
        gain = array_gain_spectrum(beam, CFG, m, probe)
        peak = probe[np.argmax(gain)]
        eta = relative_frequency(CFG, m)
        assert abs(SIN60 - peak) == pytest.approx((eta - 1) * SIN60,
                                                  abs=5e-3)

    def test_split_corrected_beams_align_across_band(self):
        n = CFG.bs_antennas
        probe = np.linspace(-1, 1, 2049)
        for m in range(1, CFG.num_subcarriers + 1):
            eta = relative_frequency(CFG, m)
            beam = steering_vector(eta * SIN60, n) / np.sqrt(n)
            gain = array_gain_spectrum(beam, CFG, m, probe)
            assert abs(probe[np.argmax(gain)] - SIN60) <= 2 / 2048

    def test_probe_domain_guard(self):
        beam = steering_vector(0.0, 8) / np.sqrt(8)
        with pytest.raises(ValueError):
            array_gain_spectrum(beam, CFG, 1, np.array([0.0, 1.2]))


def test_digital_beamformer_shapes_and_norms():
    paths = sample_paths(CFG, 9, "off_grid")
    channels = wideband_channels(paths, CFG)
    digital = digital_beamformers(channels, 1.0, 0.1)
    assert digital.precoders.shape == (2, 8, 32)
    assert digital.combiners.shape == (2, 8, 8)
    assert np.allclose(np.linalg.norm(digital.precoders, axis=2), 1.0,
                       atol=1e-12)
