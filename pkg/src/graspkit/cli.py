"""Command-line entry point: ``graspkit annotate|bounds|build|eval|stats``."""
from __future__ import annotations

import argparse
import logging
import sys

from .codec import SpecMismatchError
from .config import ConfigError, load_config
from .kinematics import HandSpecError
from .metrics import MissingHandError
from .pipeline import cmd_annotate, cmd_bounds, cmd_build, cmd_eval, cmd_stats

logger = logging.getLogger("graspkit")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML or JSON pipeline config")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--workers", type=int, default=None, help="worker processes")
    common.add_argument("--fresh", action="store_true", help="ignore previous annotate outputs")
    common.add_argument("--force", action="store_true",
                        help="accept token streams whose bin spec hash does not match")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="graspkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("annotate", parents=[common], help="contact annotation and penetration filter")
    sub.add_parser("bounds", parents=[common], help="per-hand bin specs from kept grasps")
    sub.add_parser("build", parents=[common], help="conversation JSONL")
    ev = sub.add_parser("eval", parents=[common], help="score predictions against kept grasps")
    ev.add_argument("predictions", help="prediction JSONL (numeric or token-stream lines)")
    sub.add_parser("stats", parents=[common], help="dataset statistics table")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, workers=args.workers)
        if args.command == "annotate":
            res = cmd_annotate(cfg, fresh=args.fresh)
            print(f"annotated {res.total}: kept {res.kept}, dropped {res.dropped} "
                  f"({dict(sorted(res.reasons.items()))}), recomputed {res.recomputed}")
            return res.exit_code
        if args.command == "bounds":
            specs = cmd_bounds(cfg)
            print(f"wrote {len(specs)} bin specs: {', '.join(sorted(specs))}")
        elif args.command == "build":
            print(f"wrote {cmd_build(cfg)} conversation samples")
        elif args.command == "eval":
            print(cmd_eval(cfg, args.predictions, force=args.force).table(), end="")
        elif args.command == "stats":
            cmd_stats(cfg)
            print((cfg.output_dir / "stats.txt").read_text(), end="")
    except (ConfigError, MissingHandError, HandSpecError, SpecMismatchError,
            FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, LookupError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
