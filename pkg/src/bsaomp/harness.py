"""Seeded Monte-Carlo experiment runner and CSV emission.

Seeding scheme (counter based, order independent): every random draw uses a
``numpy.random.SeedSequence`` keyed by an integer tuple

    (master_seed, STREAM_TAG, stream_code[, trial[, snr_index]])

so any trial/SNR combination can be regenerated in isolation and results do
not depend on execution order or worker count.  Pilot plans are drawn once
per experiment (the sounding design is fixed hardware); paths and noise are
redrawn per trial, noise additionally per SNR point.

Per-trial metrics are reduced in trial order, which makes multi-worker runs
bit-identical to single-worker runs.
"""

import csv
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .beamforming import design_hybrid, digital_beamformers, sum_rate
from .channel import sample_paths, wideband_channels
from .config import PRESETS, ConfigError, SystemConfig
from .dictionary import BsaDictionary
from .estimators import (_SensingWorkspace, bsa_omp, channel_covariance,
                         ls_estimate, mmse_estimate, mmse_gain_matrices,
                         nmse, oracle_ls_estimate)
from .sounding import (full_pilot_plan, measure, noise_variance_from_snr,
                       random_pilot_plan)

NMSE_ESTIMATORS = ("bsa_omp", "omp", "ls", "oracle_ls", "mmse")
SUMRATE_SOURCES = ("fully_digital", "bsa_omp", "omp")
ARRAY_GAIN_PRESETS = ((3.5e9, 0.1e9), (28e9, 2e9), (300e9, 30e9))

_STREAM_TAG = 0xB5A0
_PATHS, _NOISE_C, _NOISE_F, _PLAN_C, _PLAN_F = range(1, 6)


def derive_seed(master_seed: int, code: int, *extra: int) -> int:
    """Deterministic substream seed for (master, code, *extra)."""
    seq = np.random.SeedSequence((master_seed, _STREAM_TAG, code) + extra)
    return int(seq.generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a single experiment run depends on."""

    system: SystemConfig
    snr_grid_db: tuple = tuple(range(-10, 31, 5))
    trials: int = 200
    seed: int = 0
    experiment: str = "nmse_vs_snr"
    estimators: tuple = ("bsa_omp", "omp", "ls", "oracle_ls")
    grid_mode: str = "on_grid"
    output_path: str | None = None
    workers: int = 1
    min_separation_cells: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if len(self.snr_grid_db) == 0:
            raise ConfigError("snr_grid_db must be non-empty")
        if self.grid_mode not in ("on_grid", "off_grid"):
            raise ConfigError("grid_mode must be 'on_grid' or 'off_grid'")
        if self.experiment not in ("nmse_vs_snr", "sumrate_vs_snr",
                                   "array_gain"):
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class MetricRecord:
    """One aggregated metric point.

    ``wall_time_s`` carries the wall time of the producing experiment for
    programmatic use but is excluded from the CSV so that identically
    seeded runs emit identical bytes.
    """

    experiment: str
    estimator: str
    snr_db: float | None
    metric: str
    value: float
    value_db: float | None
    trials: int
    seed: int
    channel_uses: int
    wall_time_s: float | None = field(default=None, compare=False)


CSV_FIELDS = ("experiment", "estimator", "snr_db", "metric", "value",
              "value_db", "trials", "seed", "channel_uses")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17e}"
    return str(value)


def emit_csv(records, path) -> None:
    """Write records with a stable header and full-precision numbers."""
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_FIELDS)
            for rec in records:
                writer.writerow(
                    [_format_cell(getattr(rec, name)) for name in CSV_FIELDS])
    except OSError as exc:
        raise OSError(f"cannot write metrics CSV to {path!r}: {exc}") from exc


def read_csv(path) -> list:
    """Parse a metrics CSV back into MetricRecord objects."""
    records = []
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        for row in reader:
            records.append(MetricRecord(
                experiment=row["experiment"],
                estimator=row["estimator"],
                snr_db=float(row["snr_db"]) if row["snr_db"] else None,
                metric=row["metric"],
                value=float(row["value"]),
                value_db=float(row["value_db"]) if row["value_db"] else None,
                trials=int(row["trials"]),
                seed=int(row["seed"]),
                channel_uses=int(row["channel_uses"]),
            ))
    return records


class _ExperimentContext:
    """Shared per-experiment state (plans, dictionaries, workspaces)."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        sys_cfg = cfg.system
        self.plan_c = random_pilot_plan(sys_cfg, derive_seed(cfg.seed, _PLAN_C))
        self.dic_bsa = BsaDictionary(sys_cfg, split_aware=True)
        self.dic_flat = BsaDictionary(sys_cfg, split_aware=False)
        self.ws_bsa = None
        self.ws_flat = None
        self.plan_f = None
        self.covariance = None
        self.mmse_gains = {}

    def prepare_nmse(self):
        est = self.cfg.estimators
        if "bsa_omp" in est or "oracle_ls" in est:
            self.ws_bsa = _SensingWorkspace(self.plan_c, self.dic_bsa)
        if "omp" in est:
            self.ws_flat = _SensingWorkspace(self.plan_c, self.dic_flat)
        if "ls" in est or "mmse" in est:
            self.plan_f = full_pilot_plan(self.cfg.system,
                                          derive_seed(self.cfg.seed, _PLAN_F))
        if "mmse" in est:
            self.covariance = channel_covariance(self.cfg.system,
                                                 self.cfg.grid_mode)
            for snr in self.cfg.snr_grid_db:
                self.mmse_gains[snr] = mmse_gain_matrices(
                    self.plan_f, self.covariance,
                    noise_variance_from_snr(snr))

    def prepare_sumrate(self):
        self.ws_bsa = _SensingWorkspace(self.plan_c, self.dic_bsa)
        self.ws_flat = _SensingWorkspace(self.plan_c, self.dic_flat)


_CONTEXT: dict = {}


def _trial_paths_and_channels(ctx, trial):
    cfg = ctx.cfg
    paths = sample_paths(cfg.system, derive_seed(cfg.seed, _PATHS, trial),
                         cfg.grid_mode, cfg.min_separation_cells)
    return paths, wideband_channels(paths, cfg.system)


def _nmse_trial(trial: int) -> dict:
    ctx = _CONTEXT["active"]
    cfg = ctx.cfg
    sys_cfg = cfg.system
    paths, channels = _trial_paths_and_channels(ctx, trial)
    needs_compressed = any(e in cfg.estimators
                           for e in ("bsa_omp", "omp", "oracle_ls"))
    needs_full = any(e in cfg.estimators for e in ("ls", "mmse"))
    out = {}
    for si, snr in enumerate(cfg.snr_grid_db):
        bundle_c = measure(channels, ctx.plan_c, snr,
                           derive_seed(cfg.seed, _NOISE_C, trial, si)) \
            if needs_compressed else None
        bundle_f = measure(channels, ctx.plan_f, snr,
                           derive_seed(cfg.seed, _NOISE_F, trial, si)) \
            if needs_full else None
        for label in cfg.estimators:
            if label == "bsa_omp":
                ests = bsa_omp(bundle_c, ctx.plan_c, ctx.dic_bsa,
                               sys_cfg.num_paths, workspace=ctx.ws_bsa)
                est_channels = np.stack([e.channel_est for e in ests])
            elif label == "omp":
                ests = bsa_omp(bundle_c, ctx.plan_c, ctx.dic_flat,
                               sys_cfg.num_paths, workspace=ctx.ws_flat)
                est_channels = np.stack([e.channel_est for e in ests])
            elif label == "oracle_ls":
                est_channels = oracle_ls_estimate(bundle_c, ctx.plan_c,
                                                  paths, sys_cfg)
            elif label == "ls":
                est_channels = ls_estimate(bundle_f, ctx.plan_f)
            else:  # mmse
                est_channels = mmse_estimate(bundle_f, ctx.plan_f,
                                             ctx.covariance,
                                             ctx.mmse_gains[snr])
            out[(label, snr)] = nmse(channels, est_channels)
    return out


def _sumrate_trial(trial: int) -> dict:
    ctx = _CONTEXT["active"]
    cfg = ctx.cfg
    sys_cfg = cfg.system
    _, channels = _trial_paths_and_channels(ctx, trial)
    out = {}
    for si, snr in enumerate(cfg.snr_grid_db):
        noise_var = noise_variance_from_snr(snr)
        bundle = measure(channels, ctx.plan_c, snr,
                         derive_seed(cfg.seed, _NOISE_C, trial, si))
        for label in cfg.estimators:
            if label == "fully_digital":
                bf = digital_beamformers(channels, 1.0, noise_var)
            else:
                dic = ctx.dic_bsa if label == "bsa_omp" else ctx.dic_flat
                ws = ctx.ws_bsa if label == "bsa_omp" else ctx.ws_flat
                ests = bsa_omp(bundle, ctx.plan_c, dic, sys_cfg.num_paths,
                               workspace=ws)
                est_channels = np.stack([e.channel_est for e in ests])
                bf = design_hybrid(est_channels, dic, sys_cfg, 1.0, noise_var)
            out[(label, snr)] = sum_rate(channels, bf, 1.0, noise_var)
    return out


def _run_trials(trial_fn, cfg: ExperimentConfig) -> list:
    """Dispatch trials (optionally to a fork pool); reduce in trial order."""
    trials = list(range(cfg.trials))
    if cfg.workers == 1:
        return [trial_fn(t) for t in trials]
    import multiprocessing as mp
    try:
        ctx = mp.get_context("fork")
    except ValueError:
        return [trial_fn(t) for t in trials]
    with ctx.Pool(processes=cfg.workers) as pool:
        return pool.map(trial_fn, trials)


def _validate_labels(labels, allowed, what):
    for label in labels:
        if label not in allowed:
            raise ConfigError(
                f"unknown {what} {label!r}; valid choices: "
                f"{', '.join(allowed)}"
            )


def _channel_uses(label: str, sys_cfg: SystemConfig) -> int:
    # LS/MMSE need full observations; the greedy family (and the oracle
    # gain solve, which shares its measurements) use the compressed plan
    if label in ("ls", "mmse"):
        return sys_cfg.full_channel_uses
    return sys_cfg.pilot_channel_uses


def run_nmse_experiment(cfg: ExperimentConfig) -> list:
    """Per-(estimator, SNR) mean linear NMSE over trials, users, subcarriers."""
    _validate_labels(cfg.estimators, NMSE_ESTIMATORS, "estimator")
    start = time.perf_counter()
    context = _ExperimentContext(cfg)
    context.prepare_nmse()
    _CONTEXT["active"] = context
    try:
        per_trial = _run_trials(_nmse_trial, cfg)
    finally:
        _CONTEXT.pop("active", None)
    elapsed = time.perf_counter() - start
    records = []
    for label in cfg.estimators:
        for snr in cfg.snr_grid_db:
            mean = float(np.mean([t[(label, snr)] for t in per_trial]))
            records.append(MetricRecord(
                experiment="nmse_vs_snr", estimator=label, snr_db=float(snr),
                metric="nmse", value=mean,
                value_db=float(10 * np.log10(mean)) if mean > 0 else None,
                trials=cfg.trials, seed=cfg.seed,
                channel_uses=_channel_uses(label, cfg.system),
                wall_time_s=elapsed))
    return records


def run_sumrate_experiment(cfg: ExperimentConfig) -> list:
    """Per-(beamformer source, SNR) mean sum rate over trials."""
    _validate_labels(cfg.estimators, SUMRATE_SOURCES, "beamformer source")
    start = time.perf_counter()
    context = _ExperimentContext(cfg)
    context.prepare_sumrate()
    _CONTEXT["active"] = context
    try:
        per_trial = _run_trials(_sumrate_trial, cfg)
    finally:
        _CONTEXT.pop("active", None)
    elapsed = time.perf_counter() - start
    records = []
    for label in cfg.estimators:
        for snr in cfg.snr_grid_db:
            mean = float(np.mean([t[(label, snr)] for t in per_trial]))
            uses = cfg.system.pilot_channel_uses if label != "fully_digital" \
                else 0
            records.append(MetricRecord(
                experiment="sumrate_vs_snr", estimator=label,
                snr_db=float(snr), metric="sum_rate_bps_hz", value=mean,
                value_db=None, trials=cfg.trials, seed=cfg.seed,
                channel_uses=uses, wall_time_s=elapsed))
    return records


def run_array_gain(cfg: ExperimentConfig, phi: float,
                   probe_spacing: float = 2.0 / 2048) -> list:
    """Beam-pointing spectra across the band for the Fig-style presets.

    For each (carrier, bandwidth) preset this probes, per subcarrier, a
    frequency-flat beam steered at the physical direction ``phi`` and the
    split-corrected per-subcarrier beams.  Returns one dict per preset with
    the probe grid, both spectra stacks (M x probe points) and the peak
    locations per subcarrier.
    """
    from .arrays import relative_frequency, steering_vector
    from .beamforming import array_gain_spectrum
    if abs(phi) > 1:
        raise ConfigError("phi must be a sine-domain direction in [-1, 1]")
    n_probe = int(round(2.0 / probe_spacing)) + 1
    probe = np.linspace(-1.0, 1.0, n_probe)
    n_tx = cfg.system.bs_antennas
    results = []
    for carrier, bandwidth in ARRAY_GAIN_PRESETS:
        sys_cfg = cfg.system.with_updates(carrier_hz=carrier,
                                          bandwidth_hz=bandwidth)
        M = sys_cfg.num_subcarriers
        flat_beam = steering_vector(phi, n_tx) / np.sqrt(n_tx)
        flat = np.empty((M, n_probe))
        corrected = np.empty((M, n_probe))
        for m in range(1, M + 1):
            eta = relative_frequency(sys_cfg, m)
            corrected_beam = steering_vector(eta * phi, n_tx) / np.sqrt(n_tx)
            flat[m - 1] = array_gain_spectrum(flat_beam, sys_cfg, m, probe)
            corrected[m - 1] = array_gain_spectrum(corrected_beam, sys_cfg,
                                                   m, probe)
        results.append({
            "carrier_hz": carrier,
            "bandwidth_hz": bandwidth,
            "phi": phi,
            "probe": probe,
            "flat": flat,
            "corrected": corrected,
            "flat_peaks": probe[np.argmax(flat, axis=1)],
            "corrected_peaks": probe[np.argmax(corrected, axis=1)],
        })
    return results


def array_gain_records(results, cfg: ExperimentConfig) -> list:
    """Peak angular displacement per (preset, beam, subcarrier) as records."""
    records = []
    for res in results:
        phi_deg = np.degrees(np.arcsin(res["phi"]))
        tag = (f"array_gain@fc={res['carrier_hz']:g}Hz,"
               f"B={res['bandwidth_hz']:g}Hz")
        for kind in ("flat", "corrected"):
            peaks = res[f"{kind}_peaks"]
            for mi, peak in enumerate(peaks):
                disp = abs(np.degrees(np.arcsin(peak)) - phi_deg)
                records.append(MetricRecord(
                    experiment=tag, estimator=f"{kind}_beam@m={mi + 1}",
                    snr_db=None, metric="peak_displacement_deg",
                    value=float(disp), value_db=None, trials=1,
                    seed=cfg.seed, channel_uses=0))
    return records


def parse_config_file(path) -> dict:
    """Flat ``key = value`` file; keys mirror config field names exactly.

    Comma-separated values parse to tuples; numbers parse to int/float.
    """
    values = {}
    with open(path) as handle:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{line_no}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            values[key.strip()] = _parse_scalar_or_list(value.strip())
    return values


def _parse_scalar_or_list(text: str):
    if "," in text:
        return tuple(_parse_scalar_or_list(part.strip())
                     for part in text.split(",") if part.strip())
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


_SYSTEM_FIELDS = {f.name for f in fields(SystemConfig)}
_EXPERIMENT_FIELDS = {f.name for f in fields(ExperimentConfig)} - {"system"}


def build_experiment_config(preset: str = "desk", overrides: dict | None = None
                            ) -> ExperimentConfig:
    """Assemble an ExperimentConfig from a preset plus key overrides."""
    if preset not in PRESETS:
        raise ConfigError(
            f"unknown preset {preset!r}; valid: {', '.join(sorted(PRESETS))}")
    system = PRESETS[preset]
    exp_kwargs = {}
    for key, value in (overrides or {}).items():
        if key in _SYSTEM_FIELDS:
            system = system.with_updates(**{key: value})
        elif key in _EXPERIMENT_FIELDS:
            if key in ("snr_grid_db", "estimators") and not isinstance(
                    value, tuple):
                value = (value,)
            exp_kwargs[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    return ExperimentConfig(system=system, **exp_kwargs)
