"""Command-line entry point: ``riskg run <config>``, ``riskg bits <config>``, ``riskg presets``."""
import argparse
import sys

import numpy as np
import yaml

from .ao import alternate
from .channel import estimate_covariances
from .config import ValidationError
from .experiment import (PRESETS, ExperimentConfig, draw_seeds, format_rows, run_experiment,
                         write_rows)
from .keygen import canonical_transforms, cell_statistics, key_bits, simulate_features, write_bits
from .metrics import NumericalConsistencyError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _load(path, args):
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ValidationError(f"config is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ValidationError("config must be a mapping")
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "draws", None) is not None:
        raw["draws"] = args.draws
    return ExperimentConfig.from_dict(raw)


def cmd_run(args):
    exp = _load(args.config, args)
    if args.validate:
        print(f"{args.config}: ok")
        return EXIT_OK
    rows = run_experiment(exp, jobs=args.jobs)
    out = args.out or exp.output
    if out:
        try:
            write_rows(rows, out)
        except OSError as exc:
            raise ValidationError(f"cannot write output: {exc}") from None
    else:
        sys.stdout.write(format_rows(rows))
    return EXIT_OK


def cmd_bits(args):
    exp = _load(args.config, args)
    value = exp.sweep_values[0]
    geo, fad, cfg = exp.scenario(value)
    if not 0 <= args.cell < cfg.K:
        raise ValidationError(f"cell must be in [0, {cfg.K})")
    cov_seed, _, probe_seed = draw_seeds(exp.seed, 0)
    covs = estimate_covariances(geo, fad, cfg, exp.covariance_samples, cov_seed)
    res = alternate(covs, cfg)
    y, z = simulate_features(geo, fad, cfg, res.P, res.v_bar, args.rounds, probe_seed)
    tr = canonical_transforms(*cell_statistics(covs, res.P, res.v_bar, args.cell))
    ut_bits, bs_bits = key_bits(y[:, args.cell], z[:, args.cell], tr)
    bits = ut_bits if args.side == "ut" else bs_bits
    try:
        write_bits(args.out, bits)
    except OSError as exc:
        raise ValidationError(f"cannot write output: {exc}") from None
    print(f"wrote {bits.size} bits to {args.out}")
    return EXIT_OK


def cmd_presets(args):
    for name, pr in sorted(PRESETS.items()):
        geo = pr.geometry()
        print(f"{name}: K={pr.K} L={pr.L}")
        print(f"  BS  {np.array2string(geo.bs_positions, separator=', ')}")
        print(f"  UT  {np.array2string(geo.ut_positions, separator=', ')}")
        print(f"  RIS {np.array2string(geo.ris_positions, separator=', ')}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="riskg", description="RIS-assisted multi-cell key generation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a sweep and write a CSV result table")
    r.add_argument("config", help="YAML experiment config (schema: docs/config_schema.json)")
    r.add_argument("--seed", type=int, help="override the master seed")
    r.add_argument("--draws", type=int, help="override the number of covariance draws")
    r.add_argument("--out", help="output CSV path (default: config 'output' or stdout)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    r.add_argument("--validate", action="store_true", help="only validate the config")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bits", help="export quantized key bits of the optimized scheme",
                       description="Runs the optimized scheme at the first sweep value and "
                                   "writes the key bits of one cell (canonical-correlation "
                                   "features, median quantizer) as packed bytes. "
                                   "Bit order within each byte is little-endian: stream bit i "
                                   "is bit (i %% 8) of byte (i // 8).")
    b.add_argument("config")
    b.add_argument("--out", required=True, help="binary output file")
    b.add_argument("--rounds", type=int, default=1024, help="probing rounds")
    b.add_argument("--cell", type=int, default=0)
    b.add_argument("--side", choices=("ut", "bs"), default="ut")
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bits)

    s = sub.add_parser("presets", help="list scenario presets")
    s.set_defaults(func=cmd_presets)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalConsistencyError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
