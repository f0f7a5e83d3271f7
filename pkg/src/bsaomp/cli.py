"""Command-line experiment runner.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
1 unexpected error.
"""

import argparse
import sys

import numpy as np

from .config import ConfigError
from .harness import (array_gain_records, build_experiment_config, emit_csv,
                      parse_config_file, run_array_gain, run_nmse_experiment,
                      run_sumrate_experiment)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _add_common_flags(parser):
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--preset", choices=("desk", "paper"), default="desk",
                        help="base system preset (default: desk)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--trials", type=int, help="Monte-Carlo trials")
    parser.add_argument("--snr", help="comma-separated SNR grid in dB")
    parser.add_argument("--estimators",
                        help="comma-separated estimator/beamformer labels")
    parser.add_argument("--grid-mode", choices=("on_grid", "off_grid"),
                        dest="grid_mode")
    parser.add_argument("--workers", type=int, help="worker processes")
    parser.add_argument("--out", help="output CSV path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsaomp",
        description="Wideband THz massive-MIMO channel estimation and "
                    "hybrid beamforming experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
            ("nmse", "channel-estimation NMSE versus SNR"),
            ("sumrate", "hybrid-beamforming sum rate versus SNR"),
            ("array-gain", "beam-pointing spectra across the band")):
        p = sub.add_parser(name, help=helptext)
        _add_common_flags(p)
        if name == "array-gain":
            p.add_argument("--phi-deg", type=float, default=60.0,
                           help="physical direction in degrees (default 60)")
    p = sub.add_parser("validate", help="run the built-in invariant suite")
    _add_common_flags(p)
    return parser


def _collect_overrides(args) -> dict:
    overrides = {}
    if args.config:
        overrides.update(parse_config_file(args.config))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.snr is not None:
        overrides["snr_grid_db"] = tuple(
            float(s) for s in args.snr.split(",") if s.strip())
    if args.estimators is not None:
        overrides["estimators"] = tuple(
            s.strip() for s in args.estimators.split(",") if s.strip())
    if args.grid_mode is not None:
        overrides["grid_mode"] = args.grid_mode
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["output_path"] = args.out
    return overrides


def _run_validate(cfg) -> int:
    """Fast self-checks of the core identities on the configured system."""
    from .arrays import (beam_split, estimate_beam_split, gamma_transform,
                         spatial_direction, steering_vector)
    from .dictionary import BsaDictionary
    from .sounding import (correlate_all_atoms, dense_pair_dictionary,
                           random_pilot_plan, sensing_column)

    sys_cfg = cfg.system
    rng = np.random.default_rng(cfg.seed)
    checks = []

    worst = 0.0
    for _ in range(200):
        phi = rng.uniform(-1, 1)
        m = int(rng.integers(1, sys_cfg.num_subcarriers + 1))
        n = int(rng.integers(2, 129))
        lhs = steering_vector(spatial_direction(phi, sys_cfg, m), n)
        gamma = gamma_transform(phi, sys_cfg, m, n)
        worst = max(worst, float(np.max(np.abs(
            lhs - gamma.apply(steering_vector(phi, n))))))
    checks.append(("split-transform identity", worst < 1e-12,
                   f"max |error| = {worst:.2e}"))

    worst = 0.0
    for _ in range(200):
        phi = rng.uniform(-1, 1)
        m = int(rng.integers(1, sys_cfg.num_subcarriers + 1))
        gamma = gamma_transform(phi, sys_cfg, m, 64)
        worst = max(worst, abs(estimate_beam_split(gamma.diagonal)
                               - beam_split(phi, sys_cfg, m)))
    checks.append(("split recovery round-trip", worst < 1e-9,
                   f"max |error| = {worst:.2e}"))

    small = sys_cfg.with_updates(bs_antennas=8, ue_antennas=4, grid_size=16,
                                 tx_pilots=4, rx_pilots=4, num_subcarriers=4)
    plan = random_pilot_plan(small, cfg.seed)
    dic = BsaDictionary(small)
    worst = 0.0
    for m in range(1, 5):
        r = (rng.standard_normal(16) + 1j * rng.standard_normal(16))
        fast = correlate_all_atoms(r, plan, dic, m)
        psi = dense_pair_dictionary(plan, dic, m)
        dense = np.abs(psi.conj().T @ r).reshape(16, 16).T
        worst = max(worst, float(np.max(np.abs(fast - dense))))
        col = sensing_column(plan, dic, m, 3, 5)
        worst = max(worst, float(np.max(np.abs(col - psi[:, 5 * 16 + 3]))))
    checks.append(("separable correlation vs dense scan", worst < 1e-10,
                   f"max |error| = {worst:.2e}"))

    ratio = sys_cfg.overhead_ratio
    checks.append(("training-overhead accounting", ratio > 0,
                   f"full/compressed channel uses = {ratio:g}"))

    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += 0 if ok else 1
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = _collect_overrides(args)
        cfg = build_experiment_config(args.preset, overrides)
        if args.command == "validate":
            return _run_validate(cfg)
        if args.command == "nmse":
            records = run_nmse_experiment(cfg)
        elif args.command == "sumrate":
            if "estimators" not in overrides:
                cfg = build_experiment_config(
                    args.preset,
                    {**overrides, "estimators": ("fully_digital", "bsa_omp",
                                                 "omp")})
            records = run_sumrate_experiment(cfg)
        else:  # array-gain
            phi = float(np.sin(np.radians(args.phi_deg)))
            results = run_array_gain(cfg, phi)
            records = array_gain_records(results, cfg)
        out = cfg.output_path or f"{args.command.replace('-', '_')}.csv"
        emit_csv(records, out)
        print(f"wrote {len(records)} records to {out}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
