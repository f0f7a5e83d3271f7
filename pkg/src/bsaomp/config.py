"""System configuration shared by every stage of the pipeline."""

from dataclasses import dataclass, replace


class ConfigError(ValueError):
    """Raised when a configuration violates a structural constraint."""


@dataclass(frozen=True)
class SystemConfig:
    """Carrier/array/pilot dimensions that parameterize all operations.

    Attributes
    ----------
    carrier_hz : float
        Carrier frequency.
    bandwidth_hz : float
        Total signal bandwidth (must stay below twice the carrier so the
        relative subcarrier frequency stays positive).
    num_subcarriers : int
        Number of OFDM subcarriers. Subcarrier indices are 1-based.
    bs_antennas : int
        Transmit (base-station) ULA size.
    ue_antennas : int
        Receive (user) ULA size.
    num_users : int
        Number of served users; equals the number of RF chains.
    num_paths : int
        Paths per user in the multipath model.
    num_rf_chains : int
        RF chains at the transmitter, constrained to num_users.
    grid_size : int
        Number of points of the shared physical-direction grid.
    tx_pilots : int
        Training beams sent by the transmitter during sounding.
    rx_pilots : int
        Combining vectors applied per pilot at the receiver.
    """

    carrier_hz: float
    bandwidth_hz: float
    num_subcarriers: int
    bs_antennas: int
    ue_antennas: int
    num_users: int
    num_paths: int
    num_rf_chains: int
    grid_size: int
    tx_pilots: int
    rx_pilots: int

    def __post_init__(self):
        counts = {
            "num_subcarriers": self.num_subcarriers,
            "bs_antennas": self.bs_antennas,
            "ue_antennas": self.ue_antennas,
            "num_users": self.num_users,
            "num_paths": self.num_paths,
            "num_rf_chains": self.num_rf_chains,
            "grid_size": self.grid_size,
            "tx_pilots": self.tx_pilots,
            "rx_pilots": self.rx_pilots,
        }
        for name, value in counts.items():
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.carrier_hz <= 0:
            raise ConfigError("carrier_hz must be positive")
        if not 0 < self.bandwidth_hz < 2 * self.carrier_hz:
            raise ConfigError(
                "bandwidth_hz must lie in (0, 2*carrier_hz) to keep relative "
                "subcarrier frequencies positive"
            )
        if self.num_rf_chains != self.num_users:
            raise ConfigError(
                f"num_rf_chains ({self.num_rf_chains}) must equal num_users "
                f"({self.num_users}): one RF chain per served user"
            )
        if self.grid_size < max(self.bs_antennas, self.ue_antennas):
            raise ConfigError(
                f"grid_size ({self.grid_size}) must be at least "
                f"max(bs_antennas, ue_antennas) = "
                f"{max(self.bs_antennas, self.ue_antennas)}"
            )

    @property
    def pilot_channel_uses(self) -> int:
        """Channel uses consumed by the compressed sounding phase."""
        return self.tx_pilots * self.rx_pilots

    @property
    def full_channel_uses(self) -> int:
        """Channel uses a full-observation (LS/MMSE) sounding phase needs."""
        return self.bs_antennas * self.ue_antennas

    @property
    def overhead_ratio(self) -> float:
        """Training-overhead ratio of full-observation vs compressed sounding."""
        return self.full_channel_uses / self.pilot_channel_uses

    def with_updates(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)


# Full-scale configuration used for the reference experiments.  Running the
# Monte-Carlo sweeps at this size takes hours on a single workstation.
PAPER_PRESET = SystemConfig(
    carrier_hz=300e9,
    bandwidth_hz=30e9,
    num_subcarriers=128,
    bs_antennas=256,
    ue_antennas=16,
    num_users=8,
    num_paths=3,
    num_rf_chains=8,
    grid_size=8 * 256,
    tx_pilots=16,
    rx_pilots=16,
)

# Scaled-down configuration with the same relative bandwidth (and therefore
# the same beam-split severity); the full acceptance suite runs in minutes.
DESK_PRESET = SystemConfig(
    carrier_hz=300e9,
    bandwidth_hz=30e9,
    num_subcarriers=16,
    bs_antennas=64,
    ue_antennas=8,
    num_users=2,
    num_paths=3,
    num_rf_chains=2,
    grid_size=512,
    tx_pilots=16,
    rx_pilots=16,
)

PRESETS = {"desk": DESK_PRESET, "paper": PAPER_PRESET}
