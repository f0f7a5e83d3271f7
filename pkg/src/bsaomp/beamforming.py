"""Hybrid beamformer design from (estimated) channels and rate evaluation.

The analog stages are frequency flat and constant modulus: each user
contributes one transmit steering column (scaled 1/sqrt(N)) and one receive
steering column (1/sqrt(N_rx)), both selected by correlating the
unconstrained per-subcarrier beamformers against the dictionary atom pairs.
The per-subcarrier baseband stage inverts the effective user channel to
suppress inter-user interference, then the product precoder is normalized
to unit Frobenius norm.
"""

import warnings

import numpy as np

from .arrays import relative_frequency, steering_matrix, steering_vector
from .config import SystemConfig
from .dictionary import BsaDictionary

SV_CUTOFF = 1e-10


class DigitalBeamformers:
    """Per-user, per-subcarrier unconstrained beamformers.

    ``precoders`` is (K, M, bs_antennas) with unit-norm rows; ``combiners``
    is (K, M, ue_antennas).  Used as the fully-digital benchmark.
    """

    __slots__ = ("precoders", "combiners")

    def __init__(self, precoders, combiners):
        self.precoders = precoders
        self.combiners = combiners


class HybridBeamformers:
    """Frequency-flat analog stages plus per-subcarrier baseband.

    ``analog_precoder`` (bs_antennas, K) and ``analog_combiners``
    (ue_antennas, K) hold constant-modulus steering columns; ``baseband``
    is (M, K, K) normalized so ||analog_precoder @ baseband[m]||_F == 1.
    """

    __slots__ = ("analog_precoder", "baseband", "analog_combiners",
                 "rx_atom_idx", "tx_atom_idx", "rank_deficient")

    def __init__(self, analog_precoder, baseband, analog_combiners,
                 rx_atom_idx, tx_atom_idx, rank_deficient=False):
        self.analog_precoder = analog_precoder
        self.baseband = baseband
        self.analog_combiners = analog_combiners
        self.rx_atom_idx = rx_atom_idx
        self.tx_atom_idx = tx_atom_idx
        self.rank_deficient = rank_deficient


def unconstrained_precoder(channel: np.ndarray) -> np.ndarray:
    """Dominant right singular vector of one channel matrix (unit norm)."""
    channel = np.asarray(channel)
    if not np.any(channel):
        raise ValueError("cannot derive a precoder from an all-zero channel")
    _, _, vh = np.linalg.svd(channel, full_matrices=False)
    return vh[0].conj()


def unconstrained_combiner(channel: np.ndarray, precoder: np.ndarray,
                           rho: float, noise_var: float) -> np.ndarray:
    """Matched-filter receive vector with a scalar MMSE-style scaling.

    w = (1/rho) * (f^H H^H H f + noise_var/rho)^{-1} * (H f); the inverse
    is of a scalar, so the direction is always H @ f and only the scale
    varies with the noise level.
    """
    hf = channel @ precoder
    scale = float(np.real(np.vdot(hf, hf))) + noise_var / rho
    return hf / (rho * scale)


def digital_beamformers(channels: np.ndarray, rho: float,
                        noise_var: float) -> DigitalBeamformers:
    """Unconstrained SVD precoders and matched combiners for all users.

    ``channels`` is (K, M, ue_antennas, bs_antennas).
    """
    K, M = channels.shape[:2]
    precoders = np.empty((K, M, channels.shape[3]), dtype=complex)
    combiners = np.empty((K, M, channels.shape[2]), dtype=complex)
    for k in range(K):
        for mi in range(M):
            f = unconstrained_precoder(channels[k, mi])
            precoders[k, mi] = f
            combiners[k, mi] = unconstrained_combiner(channels[k, mi], f,
                                                      rho, noise_var)
    return DigitalBeamformers(precoders, combiners)


def design_hybrid(channels: np.ndarray, dic: BsaDictionary, cfg: SystemConfig,
                  rho: float = 1.0, noise_var: float = 0.0) -> HybridBeamformers:
    """Hybrid beamformers from per-user channels (estimates or truth).

    Per user the subcarrier-summed correlation between the dictionary atom
    pairs and the unconstrained beamformer pair factorizes into the product
    of two one-sided correlations, so the scan costs two matrix products
    per subcarrier.  The selected indices name physical directions; the
    analog columns are steering vectors at those directions.
    """
    channels = np.asarray(channels)
    K, M = channels.shape[:2]
    if K != cfg.num_rf_chains:
        raise ValueError(
            f"hybrid design expects num_users == num_rf_chains == {cfg.num_rf_chains}, "
            f"got {K} users"
        )
    opt = digital_beamformers(channels, rho, noise_var)
    n_tx, n_rx = cfg.bs_antennas, cfg.ue_antennas
    f_rf = np.empty((n_tx, K), dtype=complex)
    w_rf = np.empty((n_rx, K), dtype=complex)
    rx_idx = np.empty(K, dtype=int)
    tx_idx = np.empty(K, dtype=int)
    Q = len(dic.grid)
    for k in range(K):
        scan = np.zeros((Q, Q))
        for mi in range(M):
            rx_corr = np.abs(dic.rx_atoms(mi + 1).conj().T @ opt.combiners[k, mi])
            tx_corr = np.abs(dic.tx_atoms(mi + 1).conj().T @ opt.precoders[k, mi])
            scan += np.outer(rx_corr, tx_corr)
        q_rx, q_tx = np.unravel_index(int(np.argmax(scan)), scan.shape)
        rx_idx[k] = q_rx
        tx_idx[k] = q_tx
        f_rf[:, k] = steering_vector(dic.physical_from_atom(q_tx), n_tx) / np.sqrt(n_tx)
        w_rf[:, k] = steering_vector(dic.physical_from_atom(q_rx), n_rx) / np.sqrt(n_rx)

    baseband = np.empty((M, K, K), dtype=complex)
    rank_deficient = False
    for mi in range(M):
        h_eff = np.empty((K, K), dtype=complex)
        for k in range(K):
            h_eff[k] = w_rf[:, k].conj() @ channels[k, mi] @ f_rf
        f_bb = np.linalg.pinv(h_eff, rcond=SV_CUTOFF)
        if np.linalg.matrix_rank(h_eff, tol=SV_CUTOFF * np.linalg.norm(h_eff, 2)) < K:
            rank_deficient = True
        norm = np.linalg.norm(f_rf @ f_bb)
        baseband[mi] = f_bb / norm
    if rank_deficient:
        warnings.warn("singular effective channel; pseudo-inverse baseband",
                      RuntimeWarning, stacklevel=2)
    return HybridBeamformers(f_rf, baseband, w_rf, rx_idx, tx_idx,
                             rank_deficient)


def sum_rate(true_channels: np.ndarray, beamformers, rho: float,
             noise_var: float) -> float:
    """Average spectral efficiency in bits/s/Hz over the band.

    Per user and subcarrier the SINR uses signal power rho/K through the
    beamformer cascade.  For hybrid beamformers the inter-user interference
    created by the shared analog precoder is counted explicitly.  For the
    fully-digital benchmark each user runs on its own unconstrained pair,
    interference free (the dominant-mode upper bound the hybrid design is
    compared against).
    """
    true_channels = np.asarray(true_channels)
    K, M = true_channels.shape[:2]
    if rho == 0:
        return 0.0
    if noise_var <= 0:
        raise ValueError("sum_rate requires noise_var > 0")
    per_stream = rho / K
    total = 0.0
    if isinstance(beamformers, HybridBeamformers):
        for mi in range(M):
            precoder = beamformers.analog_precoder @ beamformers.baseband[mi]
            for k in range(K):
                w = beamformers.analog_combiners[:, k]
                row = w.conj() @ true_channels[k, mi] @ precoder
                sig = per_stream * np.abs(row[k]) ** 2
                interference = per_stream * (np.sum(np.abs(row) ** 2)
                                             - np.abs(row[k]) ** 2)
                noise = noise_var * float(np.real(np.vdot(w, w)))
                total += np.log2(1.0 + sig / (interference + noise))
    elif isinstance(beamformers, DigitalBeamformers):
        for mi in range(M):
            for k in range(K):
                w = beamformers.combiners[k, mi]
                f = beamformers.precoders[k, mi]
                gain = np.abs(w.conj() @ true_channels[k, mi] @ f) ** 2
                noise = noise_var * float(np.real(np.vdot(w, w)))
                total += np.log2(1.0 + per_stream * gain / noise)
    else:
        raise TypeError("beamformers must be HybridBeamformers or "
                        "DigitalBeamformers")
    return float(total / M)


def array_gain_spectrum(beamformer_column: np.ndarray, cfg: SystemConfig,
                        m: int, probe_grid) -> np.ndarray:
    """Normalized array gain |a(eta_m * probe)^H f|^2 / n over physical
    probe directions.

    The probe is specified in the physical domain; a source at physical
    direction phi excites the array at spatial direction eta_m * phi, so a
    frequency-flat beam shows its peak displaced in phi while a
    split-corrected (per-subcarrier) beam peaks at the same phi for
    every m.
    """
    probe = np.asarray(probe_grid, dtype=float)
    if np.any(np.abs(probe) > 1.1):
        raise ValueError("probe directions must lie within [-1.1, 1.1]")
    f = np.asarray(beamformer_column)
    eta = relative_frequency(cfg, m)
    atoms = steering_matrix(eta * probe, f.shape[0])
    return np.abs(atoms.conj().T @ f) ** 2 / f.shape[0]
