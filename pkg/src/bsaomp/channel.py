"""Multipath geometry sampling and wideband channel synthesis.

The channel at subcarrier m is a sum of L rank-one terms

    H_k[m] = zeta * sum_l alpha_{k,l} * rx_steer(eta_m * doa) *
             tx_steer(eta_m * dod)^H * exp(-2j*pi*tau_{k,l}*f_m)

with zeta = sqrt(ue_antennas * bs_antennas / num_paths).  Path gains are
drawn independently per path; the delay term makes the channel frequency
selective on top of the beam-split effect carried by the steering vectors.
"""

import json

import numpy as np

from .arrays import relative_frequency, steering_matrix, subcarrier_frequency
from .config import SystemConfig
from .dictionary import build_physical_grid

DELAY_SPREAD_S = 20e-9


class PathSet:
    """Physical DOA/DOD (sine domain), complex gain and delay per path.

    Arrays are shaped (num_users, num_paths).
    """

    __slots__ = ("doa", "dod", "gains", "delays", "grid_mode")

    def __init__(self, doa, dod, gains, delays, grid_mode="off_grid"):
        self.doa = np.asarray(doa, dtype=float)
        self.dod = np.asarray(dod, dtype=float)
        self.gains = np.asarray(gains, dtype=complex)
        self.delays = np.asarray(delays, dtype=float)
        self.grid_mode = grid_mode
        if not (self.doa.shape == self.dod.shape == self.gains.shape
                == self.delays.shape):
            raise ValueError("path arrays must share one (users, paths) shape")
        if np.any(np.abs(self.doa) > 1) or np.any(np.abs(self.dod) > 1):
            raise ValueError("sine-domain directions must lie in [-1, 1]")
        if np.any(self.delays < 0):
            raise ValueError("delays must be non-negative")

    @property
    def num_users(self) -> int:
        return self.doa.shape[0]

    @property
    def num_paths(self) -> int:
        return self.doa.shape[1]

    def to_json(self) -> str:
        """Structured text form; complex gains stored as [re, im] pairs."""
        payload = {
            "grid_mode": self.grid_mode,
            "doa": self.doa.tolist(),
            "dod": self.dod.tolist(),
            "gains": _complex_to_pairs(self.gains),
            "delays": self.delays.tolist(),
        }
        return json.dumps(payload, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "PathSet":
        payload = json.loads(text)
        return cls(
            doa=payload["doa"],
            dod=payload["dod"],
            gains=_pairs_to_complex(payload["gains"]),
            delays=payload["delays"],
            grid_mode=payload["grid_mode"],
        )


def _complex_to_pairs(arr: np.ndarray):
    stacked = np.stack([np.real(arr), np.imag(arr)], axis=-1)
    return stacked.tolist()


def _pairs_to_complex(nested) -> np.ndarray:
    arr = np.asarray(nested, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def _draw_separated_indices(rng, grid_size, count, min_cells, max_tries=10000):
    # uniform over index sets whose pairwise distance is >= min_cells
    for _ in range(max_tries):
        idx = rng.choice(grid_size, size=count, replace=False)
        if count == 1:
            return idx
        diffs = np.abs(np.subtract.outer(idx, idx))
        if diffs[~np.eye(count, dtype=bool)].min() >= min_cells:
            return idx
    raise RuntimeError(
        f"could not place {count} grid points with separation "
        f">= {min_cells} cells on a {grid_size}-point grid"
    )


def sample_paths(cfg: SystemConfig, rng_seed: int, grid_mode: str = "off_grid",
                 min_separation_cells: int = 1) -> PathSet:
    """Draw a random PathSet: directions uniform on [-1, 1], gains standard
    complex normal, delays uniform on [0, 20 ns].

    With ``grid_mode='on_grid'`` directions are grid points of the shared
    Q-point dictionary grid, with a minimum pairwise separation (in grid
    cells, per side) so that noiseless exact-recovery experiments are
    well posed.  Deterministic for a given seed.
    """
    if grid_mode not in ("on_grid", "off_grid"):
        raise ValueError(f"grid_mode must be 'on_grid' or 'off_grid', got {grid_mode!r}")
    rng = np.random.default_rng(rng_seed)
    K, L = cfg.num_users, cfg.num_paths
    if grid_mode == "on_grid":
        grid = build_physical_grid(cfg.grid_size).points
        doa = np.empty((K, L))
        dod = np.empty((K, L))
        for k in range(K):
            doa[k] = grid[_draw_separated_indices(rng, cfg.grid_size, L,
                                                  min_separation_cells)]
            dod[k] = grid[_draw_separated_indices(rng, cfg.grid_size, L,
                                                  min_separation_cells)]
    else:
        doa = rng.uniform(-1, 1, size=(K, L))
        dod = rng.uniform(-1, 1, size=(K, L))
    gains = (rng.standard_normal((K, L)) + 1j * rng.standard_normal((K, L))) \
        / np.sqrt(2)
    delays = rng.uniform(0.0, DELAY_SPREAD_S, size=(K, L))
    return PathSet(doa, dod, gains, delays, grid_mode=grid_mode)


def gain_scale(cfg: SystemConfig) -> float:
    """Channel normalization zeta = sqrt(ue_antennas * bs_antennas / paths)."""
    return np.sqrt(cfg.ue_antennas * cfg.bs_antennas / cfg.num_paths)


def path_gain_at_subcarrier(paths: PathSet, k: int, l: int, cfg: SystemConfig,
                            m: int) -> complex:
    """Effective gain zeta * alpha * exp(-2j*pi*tau*f_m) of one path."""
    f_m = subcarrier_frequency(cfg, m)
    return complex(
        gain_scale(cfg) * paths.gains[k, l]
        * np.exp(-2j * np.pi * paths.delays[k, l] * f_m)
    )


def channel_matrix(paths: PathSet, k: int, cfg: SystemConfig, m: int) -> np.ndarray:
    """Channel of user k at subcarrier m, shape (ue_antennas, bs_antennas)."""
    eta = relative_frequency(cfg, m)
    f_m = subcarrier_frequency(cfg, m)
    z = gain_scale(cfg) * paths.gains[k] * np.exp(-2j * np.pi * paths.delays[k] * f_m)
    rx = steering_matrix(eta * paths.doa[k], cfg.ue_antennas)
    tx = steering_matrix(eta * paths.dod[k], cfg.bs_antennas)
    return (rx * z) @ tx.conj().T


def wideband_channels(paths: PathSet, cfg: SystemConfig) -> np.ndarray:
    """All users' channels, shape (num_users, M, ue_antennas, bs_antennas)."""
    K, M = paths.num_users, cfg.num_subcarriers
    out = np.empty((K, M, cfg.ue_antennas, cfg.bs_antennas), dtype=complex)
    for k in range(K):
        for m in range(1, M + 1):
            out[k, m - 1] = channel_matrix(paths, k, cfg, m)
    return out


def channels_to_json(channels: np.ndarray) -> str:
    """Serialize a channel array (complex entries as [re, im] pairs)."""
    return json.dumps({"shape": list(channels.shape),
                       "data": _complex_to_pairs(channels)})


def channels_from_json(text: str) -> np.ndarray:
    payload = json.loads(text)
    data = _pairs_to_complex(payload["data"])
    return data.reshape(payload["shape"])


def awgn(shape, noise_variance: float, rng_seed: int) -> np.ndarray:
    """Circularly-symmetric complex Gaussian noise with per-entry variance
    ``noise_variance`` (real and imaginary parts each carry half of it)."""
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    rng = np.random.default_rng(rng_seed)
    scale = np.sqrt(noise_variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
