"""Wideband THz massive-MIMO toolkit: beam-split-aware sparse channel
estimation, classical baselines, and hybrid beamformer design."""

from .arrays import (beam_split, estimate_beam_split, gamma_transform,
                     phase_unwrap, relative_frequency, spatial_direction,
                     steering_vector, subcarrier_frequency)
from .beamforming import (DigitalBeamformers, HybridBeamformers,
                          array_gain_spectrum, design_hybrid,
                          digital_beamformers, sum_rate,
                          unconstrained_combiner, unconstrained_precoder)
from .channel import (PathSet, awgn, channel_matrix, path_gain_at_subcarrier,
                      sample_paths, wideband_channels)
from .config import DESK_PRESET, PAPER_PRESET, ConfigError, SystemConfig
from .dictionary import BsaDictionary, PhysicalGrid, build_physical_grid
from .estimators import (SparseEstimate, bsa_omp, channel_covariance,
                         ls_estimate, mmse_estimate, nmse, nmse_db,
                         oracle_ls_estimate, vanilla_omp)
from .harness import (ExperimentConfig, MetricRecord, emit_csv,
                      build_experiment_config, read_csv, run_array_gain,
                      run_nmse_experiment, run_sumrate_experiment)
from .sounding import (MeasurementBundle, PilotPlan, correlate_all_atoms,
                       full_pilot_plan, measure, random_pilot_plan,
                       sensing_column, unvec, vec)

__version__ = "0.1.0"
