"""ULA steering arithmetic in the sine-of-angle domain.

Conventions used everywhere in this package:

* Directions are sines of physical angles.  A *physical* direction
  ``phi = sin(angle)`` lies in [-1, 1] and is frequency independent.  The
  *spatial* direction observed at subcarrier m is ``eta_m * phi`` where
  ``eta_m = f_m / f_c`` is the relative subcarrier frequency; with
  half-wavelength element spacing at the carrier, the array phase
  progression at subcarrier m follows the spatial direction.
* Steering-vector elements carry the phase ``exp(-1j*pi*(n-1)*direction)``
  for element n = 1..N; vectors are unnormalized (the first element is
  exactly 1).
* Subcarrier indices m are 1-based, m = 1..M.
"""

import numpy as np

from .config import SystemConfig


def subcarrier_frequency(cfg: SystemConfig, m: int) -> float:
    """Absolute frequency of subcarrier m: f_c + (B/M)*(m - 1 - (M-1)/2).

    The M frequencies are symmetric about the carrier with spacing B/M.
    """
    if not 1 <= m <= cfg.num_subcarriers:
        raise IndexError(
            f"subcarrier index {m} outside 1..{cfg.num_subcarriers}"
        )
    step = cfg.bandwidth_hz / cfg.num_subcarriers
    return cfg.carrier_hz + step * (m - 1 - (cfg.num_subcarriers - 1) / 2)


def relative_frequency(cfg: SystemConfig, m: int) -> float:
    """Ratio eta_m = f_m / f_c (equals 1 at the center of an odd-M band)."""
    return subcarrier_frequency(cfg, m) / cfg.carrier_hz


def relative_frequencies(cfg: SystemConfig) -> np.ndarray:
    """eta_m for all M subcarriers as a vector."""
    return np.array(
        [relative_frequency(cfg, m) for m in range(1, cfg.num_subcarriers + 1)]
    )


def spatial_direction(phi: float, cfg: SystemConfig, m: int) -> float:
    """Spatial direction eta_m * phi seen by the array at subcarrier m."""
    return relative_frequency(cfg, m) * phi


def beam_split(phi: float, cfg: SystemConfig, m: int) -> float:
    """Beam split Delta = spatial_direction - phi = (eta_m - 1) * phi.

    Computed as the literal difference so that ``beam_split + phi`` equals
    ``spatial_direction`` exactly in floating point.
    """
    return spatial_direction(phi, cfg, m) - phi


def steering_matrix(directions, n: int) -> np.ndarray:
    """Stack of unnormalized ULA steering vectors, shape (n, len(directions)).

    Element (i, q) is exp(-1j*pi*i*directions[q]); spatial directions may
    exceed [-1, 1] (up to eta_m in magnitude), which simply aliases the
    phase progression.
    """
    d = np.atleast_1d(np.asarray(directions, dtype=float))
    return np.exp(-1j * np.pi * np.outer(np.arange(n), d))


def steering_vector(direction: float, n: int) -> np.ndarray:
    """Single unnormalized ULA steering vector of length n."""
    if n < 1:
        raise ValueError("array size must be >= 1")
    return steering_matrix(direction, n)[:, 0]


class GammaTransform:
    """Diagonal transform mapping a physical-direction steering vector to
    its beam-split counterpart at one subcarrier.

    ``diagonal[i] = exp(-1j*pi*i*beam_split)``, so elementwise
    ``diagonal * steering_vector(phi, n) == steering_vector(eta_m*phi, n)``.
    """

    __slots__ = ("diagonal", "beam_split")

    def __init__(self, diagonal: np.ndarray, split: float):
        self.diagonal = diagonal
        self.beam_split = split

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.diagonal * vector

    def as_matrix(self) -> np.ndarray:
        return np.diag(self.diagonal)


def gamma_transform(phi: float, cfg: SystemConfig, m: int, n: int) -> GammaTransform:
    """Beam-split transform for physical direction phi at subcarrier m.

    The diagonal is itself a steering vector pointed at the beam-split
    value, which is what makes the elementwise identity above exact.
    """
    split = beam_split(phi, cfg, m)
    return GammaTransform(steering_vector(split, n), split)


def phase_unwrap(angles) -> np.ndarray:
    """Undo the (-pi, pi] wrap of a phase sequence.

    Consecutive differences of the output have magnitude <= pi and the
    output is congruent to the input modulo 2*pi elementwise.
    """
    return np.unwrap(np.asarray(angles, dtype=float))


def estimate_beam_split(gamma_diagonal) -> float:
    """Recover the beam-split value from a gamma-transform diagonal.

    Averages the unwrapped element phases divided by their element index;
    the minus sign undoes the exp(-1j*...) steering convention.  Unwrapping
    first keeps the recovery exact even when (n-1)*split exceeds the
    principal branch.
    """
    gamma = np.asarray(gamma_diagonal)
    if gamma.ndim != 1 or gamma.size < 2:
        raise ValueError("gamma diagonal must be a vector of length >= 2")
    angles = phase_unwrap(np.angle(gamma))
    idx = np.arange(1, gamma.size)
    return float(-np.mean(angles[1:] / (np.pi * idx)))
