"""Command line entry point: ``bprlex {split,train,predict,evaluate,ablate}``.

Exit status is 0 on success, 2 for configuration problems (including a
missing prerequisite step), 3 for bad input data and 4 when training
diverges.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import BprlexError
from .pipeline import (MODEL_NAMES, PipelineConfig, cmd_ablate, cmd_evaluate, cmd_predict,
                       cmd_split, cmd_train)

log = logging.getLogger("bprlex")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline INI file")
    common.add_argument("--seed", type=int, default=None, help="override every seed in the config")
    common.add_argument("--strict", action="store_true", default=None,
                        help="treat malformed input lines as fatal")
    common.add_argument("--quiet", action="store_true", help="only print warnings and errors")

    parser = argparse.ArgumentParser(prog="bprlex",
                                     description="Word translation as BPR matrix completion.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("split", parents=[common], help="build the test split and seed lexicon")
    train = sub.add_parser("train", parents=[common], help="train one model and checkpoint it")
    train.add_argument("which", choices=MODEL_NAMES)
    sub.add_parser("predict", parents=[common], help="rank candidates with the back-off scheme")
    ev = sub.add_parser("evaluate", parents=[common], help="score predictions against the gold set")
    ev.add_argument("--predictions", type=Path, default=None)
    ab = sub.add_parser("ablate", parents=[common], help="accuracy as a function of seed size")
    ab.add_argument("--sizes", nargs="+", default=None,
                    help="seed lexicon sizes; 'all' means the full seed set")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config, seed=args.seed, strict=args.strict)
        if args.command == "split":
            m = cmd_split(cfg)
            print(f"test words: {m['n_test']}  seed pairs: {m['n_seeds']}")
        elif args.command == "train":
            path = cmd_train(cfg, args.which)
            print(f"wrote {path}")
        elif args.command == "predict":
            counts = cmd_predict(cfg)
            print("  ".join(f"{tier}: {n}" for tier, n in counts.items()))
        elif args.command == "evaluate":
            report = cmd_evaluate(cfg, args.predictions)
            for tier, accs, n in report.rows:
                print(f"{tier:8s} n={n:5d}  " + "  ".join(f"acc@{k}={a:.4f}"
                                                         for k, a in accs.items()))
        elif args.command == "ablate":
            sizes = [s if s == "all" else int(s) for s in args.sizes] if args.sizes else None
            for size, acc in cmd_ablate(cfg, sizes):
                print(f"{size}\t{acc:.4f}")
    except BprlexError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
