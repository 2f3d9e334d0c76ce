"""Command-line entry point: ``dimrecon <subcommand> [--config FILE] [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ExperimentConfig, load_config
from .gradcheck import TINY, finite_difference_check
from .io import save_dataset, write_pgm
from .layers import ConfigError

# CLI flags that map straight onto config keys
_FLAG_KEYS = {
    "seed": "seed", "epochs": "epochs", "preset": "preset", "out": "out_dir", "dataset": "dataset",
    "n_train": "n_train", "n_test": "n_test", "accel": "accel", "acs": "acs", "lr": "lr",
    "batch_size": "batch_size", "dtype": "dtype",
}


def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--seed", type=int, help="random seed")
    for flag in flags:
        p.add_argument(f"--{flag.replace('_', '-')}", dest=flag)


def _resolve(args) -> ExperimentConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = str(value)
    return load_config(args.config, overrides)


def cmd_gen_data(args) -> int:
    from .experiment import load_or_build_dataset

    cfg = _resolve(args)
    if args.seed is not None:
        cfg = cfg.replace(data_seed=args.seed)
    cfg = cfg.replace(dataset=None)
    ds = load_or_build_dataset(cfg)
    save_dataset(ds, args.output)
    print(f"wrote {len(ds.train)} train + {len(ds.test)} test examples to {args.output}")
    return 0


def cmd_gradcheck(args) -> int:
    config = TINY
    if args.config or args.set or args.preset:
        config = _resolve(args).model_config()
    seed = args.seed or 0
    report = finite_difference_check(config, tuple(args.shape), seed, h=args.h, tol=args.tol,
                                     noise_aware=args.noise_aware, accel=args.accel or 2.0, acs=args.acs or 2)
    print("\n".join(report.lines()))
    return 0 if report.passed else 1


def cmd_train(args) -> int:
    from .experiment import run_experiment

    cfg = _resolve(args)
    report = run_experiment(cfg, resume=args.resume)
    _print_mean(report, cfg.out_dir)
    return 0


def cmd_eval(args) -> int:
    from .experiment import evaluate_checkpoint

    cfg = _resolve(args)
    report = evaluate_checkpoint(cfg, args.checkpoint)
    _print_mean(report, cfg.out_dir)
    return 0


def cmd_sweep(args) -> int:
    from .experiment import ALPHA_SWEEP, sweep

    cfg = _resolve(args)
    values = args.values if args.values else [repr(v) for v in ALPHA_SWEEP]
    for row in sweep(cfg, args.key, values, jobs=args.jobs):
        print(json.dumps(row))
    return 0


def cmd_verify(args) -> int:
    from .experiment import verify

    problems = verify(args.run)
    for p in problems:
        print(p)
    print("OK" if not problems else f"{len(problems)} mismatches")
    return 0 if not problems else 1


def cmd_mask_preview(args) -> int:
    from .sampling import generate_mask

    cfg = _resolve(args)
    seed = args.seed if args.seed is not None else 0
    ny = args.ny or cfg.ny
    nt = args.nt or cfg.nt
    mask = generate_mask(ny, nt, cfg.accel, cfg.acs, seed, cfg.sigma)
    write_pgm(args.output, mask.to_pgm_array())
    print(f"{ny}x{nt} mask, {int(mask.lines[:, 0].sum())} lines per frame, written to {args.output}")
    return 0


def _print_mean(report, out_dir) -> None:
    m = report.mean
    print(f"PSNR {m['psnr']:.3f} dB (zero-filled {m['zf_psnr']:.3f}), "
          f"SSIM {m['ssim']:.4f} (zero-filled {m['zf_ssim']:.4f}); artifacts in {out_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dimrecon", description="Dynamic MRI reconstruction toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom dataset file")
    _common(p, "n_train", "n_test", "accel", "acs")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("gradcheck", help="finite-difference check of all parameter gradients")
    _common(p, "preset", "accel", "acs")
    p.add_argument("--shape", type=int, nargs=3, default=(8, 8, 2))
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--noise-aware", action="store_true",
                   help="ignore gaps below the finite-difference rounding resolution")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="train, evaluate and write a run directory")
    _common(p, "preset", "epochs", "out", "dataset", "lr", "batch_size", "dtype")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    _common(p, "out", "dataset")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="one run per value of a config key")
    _common(p, "preset", "epochs", "out", "dataset")
    p.add_argument("--key", default="loss_alpha")
    p.add_argument("--values", nargs="*", help="defaults to 1e-8 ... 1e-1")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="recompute a run's metrics from its stored volumes")
    p.add_argument("run")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mask-preview", help="write a sampling mask as a PGM image")
    _common(p, "accel", "acs")
    p.add_argument("--ny", type=int)
    p.add_argument("--nt", type=int)
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_mask_preview)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        from .experiment import ExperimentError

        if isinstance(exc, ExperimentError):
            print(f"error: {exc}", file=sys.stderr)
            return 3
        raise


if __name__ == "__main__":
    sys.exit(main())
