"""Command-line entry point.

Subcommands map onto pipeline stages; every command validates the config
before doing any work. Attack hyperparameters can also be overridden on
the command line for one-off runs.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .pipeline import PipelineError, run_pipeline


def _add_common(parser):
    parser.add_argument("--config", required=True, help="experiment config file")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--out-dir", default="runs/default",
                        help="run directory for artifacts")
    parser.add_argument("--force", action="store_true",
                        help="rerun the stage even if already completed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="robusthash",
        description="Hashing retrieval: pretraining, Hamming-space PGD "
                    "attacks, minimax adversarial training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("synth", "pretrain", "defend", "eval", "oracle-check"):
        _add_common(sub.add_parser(name))
    attack = sub.add_parser("attack")
    _add_common(attack)
    attack.add_argument("--eps", type=float, help="L-infinity budget")
    attack.add_argument("--step", type=float, help="PGD step size")
    attack.add_argument("--iters", type=int, help="PGD iterations")
    attack.add_argument("--mode", choices=["nontargeted", "targeted"])
    attack.add_argument("--alpha", help="'scheduled' or a fixed constant")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "attack":
            if args.eps is not None:
                cfg.attack.epsilon = args.eps
            if args.step is not None:
                cfg.attack.step_size = args.step
            if args.iters is not None:
                cfg.attack.iterations = args.iters
            if args.mode is not None:
                cfg.attack.mode = args.mode
            if args.alpha is not None:
                cfg.attack.alpha = (args.alpha if args.alpha == "scheduled"
                                    else float(args.alpha))
            cfg.attack.__post_init__()
        report = run_pipeline(cfg, {args.command}, args.out_dir,
                              force=args.force)
    except (ConfigError, PipelineError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for key in sorted(report.metrics):
        print(f"{key} {report.metrics[key]:.6f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
