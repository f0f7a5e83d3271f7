"""Pilot-phase signal model and the Kronecker-structured sensing operator.

One sounding round applies tx_pilots random training beams and, per beam,
rx_pilots random combiners (pilot symbols are the identity), consuming
tx_pilots * rx_pilots channel uses.  Stacking the combined observations of
subcarrier m column-major gives

    y[m] = (F^T kron W^H) vec(H[m]) + vec(W^H E[m])

and for a dictionary atom pair the mixed-product identity collapses the
operator application to two small products:

    psi_(qrx,qtx)[m] = (F^T tx_atom*_qtx) kron (W^H rx_atom_qrx).

vec(.) is column-major throughout; every Kronecker identity in this module
depends on that convention.
"""

import json

import numpy as np

from .channel import _complex_to_pairs, _pairs_to_complex, awgn
from .config import SystemConfig
from .dictionary import BsaDictionary

# dense-operator materialization guard, in entries
DENSE_ENTRY_LIMIT = 2 ** 24


class PilotPlan:
    """Constant-modulus random training beams and combiners.

    tx_train has shape (bs_antennas, tx_pilots) with entries of modulus
    1/sqrt(bs_antennas); rx_train analogously at the receive side.
    """

    __slots__ = ("tx_train", "rx_train")

    def __init__(self, tx_train: np.ndarray, rx_train: np.ndarray):
        self.tx_train = tx_train
        self.rx_train = rx_train

    @property
    def num_tx_pilots(self) -> int:
        return self.tx_train.shape[1]

    @property
    def num_rx_pilots(self) -> int:
        return self.rx_train.shape[1]

    @property
    def pilot_symbols(self) -> np.ndarray:
        """Identity pilot-symbol matrix (orthogonal unit pilots)."""
        return np.eye(self.num_tx_pilots)

    @property
    def channel_uses(self) -> int:
        return self.num_tx_pilots * self.num_rx_pilots


def _random_phases_plan(n_tx, n_rx, p_tx, p_rx, rng) -> PilotPlan:
    # phases uniform on [-pi/2, pi/2]; note the nonzero mean this implies
    tx = np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2, (n_tx, p_tx))) / np.sqrt(n_tx)
    rx = np.exp(1j * rng.uniform(-np.pi / 2, np.pi / 2, (n_rx, p_rx))) / np.sqrt(n_rx)
    return PilotPlan(tx, rx)


def random_pilot_plan(cfg: SystemConfig, rng_seed: int) -> PilotPlan:
    """Compressed sounding plan (tx_pilots x rx_pilots channel uses)."""
    rng = np.random.default_rng(rng_seed)
    return _random_phases_plan(cfg.bs_antennas, cfg.ue_antennas,
                               cfg.tx_pilots, cfg.rx_pilots, rng)


def full_pilot_plan(cfg: SystemConfig, rng_seed: int) -> PilotPlan:
    """Full-observation plan (bs_antennas * ue_antennas channel uses) for
    the LS/MMSE baselines."""
    rng = np.random.default_rng(rng_seed)
    return _random_phases_plan(cfg.bs_antennas, cfg.ue_antennas,
                               cfg.bs_antennas, cfg.ue_antennas, rng)


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major vectorization."""
    return matrix.ravel(order="F")


def unvec(vector: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Inverse of vec for a rows x cols matrix."""
    return vector.reshape(rows, cols, order="F")


def noise_variance_from_snr(snr_db) -> float:
    """Per-entry noise variance for unit transmit power; None means noiseless."""
    if snr_db is None or snr_db == np.inf:
        return 0.0
    return float(10.0 ** (-snr_db / 10.0))


class MeasurementBundle:
    """Vectorized pilot observations for all users and subcarriers.

    ``y`` has shape (num_users, M, rx_pilots * tx_pilots).  The sensing
    operator is kept implicit through the plan (it is Kronecker-factored);
    use :func:`dense_sensing_operator` only for small test instances.
    """

    __slots__ = ("y", "snr_db", "noise_var", "plan")

    def __init__(self, y, snr_db, noise_var, plan):
        self.y = y
        self.snr_db = snr_db
        self.noise_var = noise_var
        self.plan = plan

    @property
    def num_users(self) -> int:
        return self.y.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.y.shape[1]

    @property
    def channel_uses(self) -> int:
        return self.plan.channel_uses

    def to_json(self) -> str:
        return json.dumps({
            "snr_db": self.snr_db,
            "noise_var": self.noise_var,
            "shape": list(self.y.shape),
            "y": _complex_to_pairs(self.y),
            "tx_train": _complex_to_pairs(self.plan.tx_train),
            "rx_train": _complex_to_pairs(self.plan.rx_train),
        })

    @classmethod
    def from_json(cls, text: str) -> "MeasurementBundle":
        payload = json.loads(text)
        plan = PilotPlan(_pairs_to_complex(payload["tx_train"]),
                         _pairs_to_complex(payload["rx_train"]))
        y = _pairs_to_complex(payload["y"]).reshape(payload["shape"])
        return cls(y, payload["snr_db"], payload["noise_var"], plan)


def measure(channels: np.ndarray, plan: PilotPlan, snr_db,
            rng_seed: int) -> MeasurementBundle:
    """Run the sounding phase on (num_users, M, N_rx, N_tx) channels.

    Noise is injected at the antennas and enters the observation through
    the combiners (effective noise W^H E), so its entries stay at variance
    ``noise_var`` but are correlated across combiners.
    """
    channels = np.asarray(channels)
    if channels.ndim == 3:
        channels = channels[None]
    K, M, n_rx, n_tx = channels.shape
    if n_rx != plan.rx_train.shape[0] or n_tx != plan.tx_train.shape[0]:
        raise ValueError(
            f"channel antenna shape ({n_rx}, {n_tx}) does not match plan "
            f"({plan.rx_train.shape[0]}, {plan.tx_train.shape[0]})"
        )
    noise_var = noise_variance_from_snr(snr_db)
    wh = plan.rx_train.conj().T
    p_rx, p_tx = plan.num_rx_pilots, plan.num_tx_pilots
    y = np.empty((K, M, p_rx * p_tx), dtype=complex)
    if noise_var > 0:
        antenna_noise = awgn((K, M, n_rx, p_tx), noise_var, rng_seed)
    for k in range(K):
        for mi in range(M):
            observed = wh @ channels[k, mi] @ plan.tx_train
            if noise_var > 0:
                observed = observed + wh @ antenna_noise[k, mi]
            y[k, mi] = vec(observed)
    return MeasurementBundle(y, snr_db, noise_var, plan)


def sensing_factors(plan: PilotPlan, dic: BsaDictionary, m: int):
    """Compressed dictionary factors at subcarrier m.

    Returns (rx_factor, tx_factor) with shapes (rx_pilots, Q) and
    (tx_pilots, Q); the sensing column for atom pair (qrx, qtx) is
    kron(tx_factor[:, qtx], rx_factor[:, qrx]).
    """
    rx_factor = plan.rx_train.conj().T @ dic.rx_atoms(m)
    tx_factor = plan.tx_train.T @ dic.tx_atoms(m).conj()
    return rx_factor, tx_factor


def sensing_column(plan: PilotPlan, dic: BsaDictionary, m: int,
                   q_rx: int, q_tx: int) -> np.ndarray:
    """One column of the compressed pair dictionary, length rx_p*tx_p."""
    rx_factor = plan.rx_train.conj().T @ dic.rx_atoms(m)[:, q_rx]
    tx_factor = plan.tx_train.T @ dic.tx_atoms(m)[:, q_tx].conj()
    return np.kron(tx_factor, rx_factor)


def correlate_all_atoms(residual: np.ndarray, plan: PilotPlan,
                        dic: BsaDictionary, m: int) -> np.ndarray:
    """|psi_(qrx,qtx)[m]^H residual| for every atom pair, shape (Q, Q).

    Uses the separable two-sided product on the de-vectorized residual;
    the Q*Q column set is never materialized.
    """
    rx_factor, tx_factor = sensing_factors(plan, dic, m)
    return _correlation_magnitudes(residual, rx_factor, tx_factor)


def _correlation_magnitudes(residual, rx_factor, tx_factor) -> np.ndarray:
    # (qrx, qtx) entry of rxF^H @ unvec(r) @ conj(txF) is psi^H r
    r_mat = unvec(residual, rx_factor.shape[0], tx_factor.shape[0])
    inner = rx_factor.conj().T @ r_mat @ tx_factor.conj()
    mag = np.square(inner.real)
    mag += np.square(inner.imag)
    return np.sqrt(mag, out=mag)


def dense_sensing_operator(plan: PilotPlan) -> np.ndarray:
    """Materialize G = F^T kron W^H (test/benchmark use only)."""
    n_entries = (plan.channel_uses
                 * plan.tx_train.shape[0] * plan.rx_train.shape[0])
    if n_entries > DENSE_ENTRY_LIMIT:
        raise ValueError(
            f"refusing to materialize a {n_entries}-entry sensing operator "
            f"(limit {DENSE_ENTRY_LIMIT}); use the Kronecker-factored form"
        )
    return np.kron(plan.tx_train.T, plan.rx_train.conj().T)


def dense_pair_dictionary(plan: PilotPlan, dic: BsaDictionary, m: int) -> np.ndarray:
    """All Q^2 compressed atom-pair columns, column (qtx*Q + qrx) being the
    pair (qrx, qtx).  Test/benchmark use only."""
    q = len(dic.grid)
    if plan.channel_uses * q * q > DENSE_ENTRY_LIMIT:
        raise ValueError("pair dictionary too large to materialize")
    rx_factor, tx_factor = sensing_factors(plan, dic, m)
    return np.kron(tx_factor, rx_factor)
