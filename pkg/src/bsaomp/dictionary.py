"""Per-subcarrier steering dictionaries over a shared physical-direction grid.

Each atom index q names one physical direction phi_q for every subcarrier;
the subcarrier dependence (beam split) lives entirely inside the atoms,
which are steering vectors at the spatial direction eta_m * phi_q.  Dividing
a selected spatial direction by eta_m therefore returns the same phi_q no
matter which subcarrier it was read from.
"""

import numpy as np

from .arrays import relative_frequency, steering_matrix
from .config import SystemConfig


class PhysicalGrid:
    """Uniform, endpoint-inclusive grid of Q physical directions on [-1, 1]."""

    __slots__ = ("points",)

    def __init__(self, points: np.ndarray):
        self.points = points

    def __len__(self) -> int:
        return len(self.points)

    @property
    def spacing(self) -> float:
        return 2.0 / (len(self.points) - 1)

    def nearest_index(self, phi: float) -> int:
        return int(np.argmin(np.abs(self.points - phi)))


def build_physical_grid(grid_size: int) -> PhysicalGrid:
    """Q uniform points on [-1, 1] including both endpoints.

    Endpoint inclusion keeps the extreme directions, where beam split is
    largest, representable on the grid.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    return PhysicalGrid(np.linspace(-1.0, 1.0, grid_size))


class BsaDictionary:
    """Beam-split-aware (or frequency-flat) steering dictionaries.

    Per subcarrier m the receive dictionary is ue_antennas x Q and the
    transmit dictionary bs_antennas x Q; column q of either one is the
    steering vector at eta(m) * phi_q.  With ``split_aware=False`` the
    dictionary collapses to the classical frequency-flat one (eta == 1 for
    every subcarrier), which is what the plain-OMP baseline uses.

    Atom matrices are materialized lazily per subcarrier and cached, so
    memory stays at O((bs_antennas + ue_antennas) * Q) per touched
    subcarrier.  Instances are immutable after construction and safe to
    share across threads.
    """

    def __init__(self, cfg: SystemConfig, grid: PhysicalGrid | None = None,
                 split_aware: bool = True):
        self.cfg = cfg
        self.grid = grid if grid is not None else build_physical_grid(cfg.grid_size)
        self.split_aware = split_aware
        self._rx_cache: dict[int, np.ndarray] = {}
        self._tx_cache: dict[int, np.ndarray] = {}

    def eta(self, m: int) -> float:
        """Relative frequency the atoms at subcarrier m are built with."""
        if not self.split_aware:
            if not 1 <= m <= self.cfg.num_subcarriers:
                raise IndexError(f"subcarrier index {m} outside 1..{self.cfg.num_subcarriers}")
            return 1.0
        return relative_frequency(self.cfg, m)

    def rx_atoms(self, m: int) -> np.ndarray:
        """Receive-side atoms at subcarrier m, shape (ue_antennas, Q)."""
        if m not in self._rx_cache:
            self._rx_cache[m] = steering_matrix(
                self.eta(m) * self.grid.points, self.cfg.ue_antennas
            )
        return self._rx_cache[m]

    def tx_atoms(self, m: int) -> np.ndarray:
        """Transmit-side atoms at subcarrier m, shape (bs_antennas, Q)."""
        if m not in self._tx_cache:
            self._tx_cache[m] = steering_matrix(
                self.eta(m) * self.grid.points, self.cfg.bs_antennas
            )
        return self._tx_cache[m]

    def physical_from_atom(self, q: int) -> float:
        """Physical direction encoded by atom index q (same for every m)."""
        if not 0 <= q < len(self.grid):
            raise IndexError(f"atom index {q} outside 0..{len(self.grid) - 1}")
        return float(self.grid.points[q])
