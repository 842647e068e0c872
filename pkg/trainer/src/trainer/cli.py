"""Command line front end for the trainer.

Exit codes follow the curation tool's taxonomy: 0 ok, 1 validation
failure, 2 missing or unreadable files, 3 parity failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import TrainConfig
from .data import load_workspace, write_workspace
from .parity import check_vector_file
from .predict import save_predictions
from .probe import probe_with_slope
from .train import BEST_NAME, load_checkpoint, train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_PARITY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spineseg-trainer",
        description="toy U-Net training against curation workspaces",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-data", help="write a synthetic workspace")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--val-count", type=int, default=8)

    p = sub.add_parser("train", help="train on a workspace manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stop-train-dice", type=float, default=None)

    p = sub.add_parser("predict", help="write prediction masks for a workspace")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--split", default=None)

    p = sub.add_parser("parity", help="check losses against a vector file")
    p.add_argument("--input", required=True)

    p = sub.add_parser("probe", help="decoder gradient liveness sweep")
    p.add_argument("--slope", type=float, default=0.1)
    p.add_argument("--batches", type=int, default=100)
    return parser


def _cmd_make_data(args) -> int:
    try:
        root = write_workspace(args.output, seed=args.seed, count=args.count,
                               size=args.size, val_count=args.val_count)
    except ValueError as exc:
        print(f"spineseg-trainer make-data: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"wrote {args.count} pairs under {root}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    config = TrainConfig()
    overrides = {
        "max_epochs": args.epochs,
        "patience": args.patience,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "seed": args.seed,
    }
    changed = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **changed) if changed else config


def _cmd_train(args) -> int:
    manifest = Path(args.data) / "manifest.jsonl"
    if not manifest.exists():
        print(f"spineseg-trainer train: no manifest at {manifest}", file=sys.stderr)
        return EXIT_IO
    config = _train_config(args)
    try:
        config.validate()
        train_pairs, _ = load_workspace(args.data, split="train")
        val_pairs, _ = load_workspace(args.data, split="val")
    except ValueError as exc:
        print(f"spineseg-trainer train: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    result = train(train_pairs, val_pairs, config, args.output,
                   stop_train_dice=args.stop_train_dice)
    last = result.history[-1] if result.history else {}
    print(f"stopped: {result.stopped_reason} after {len(result.history)} epochs")
    print(f"best val mean IoU {result.best_val_miou:.4f} at epoch {result.best_epoch}")
    if last:
        print(f"final train dice {last['train_dice']:.4f}")
    return EXIT_VALIDATION if result.diverged else EXIT_OK


def _cmd_predict(args) -> int:
    path = Path(args.checkpoint)
    if path.is_dir():
        path = path / BEST_NAME
    if not path.exists():
        print(f"spineseg-trainer predict: no checkpoint at {path}", file=sys.stderr)
        return EXIT_IO
    model, _ = load_checkpoint(path)
    try:
        written = save_predictions(model, args.data, args.output, split=args.split)
    except (ValueError, OSError) as exc:
        print(f"spineseg-trainer predict: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"wrote {len(written)} prediction masks to {args.output}")
    return EXIT_OK


def _cmd_parity(args) -> int:
    if not Path(args.input).exists():
        print(f"spineseg-trainer parity: no vector file at {args.input}",
              file=sys.stderr)
        return EXIT_IO
    report = check_vector_file(args.input)
    print(report.render(), end="")
    return EXIT_OK if report.passed else EXIT_PARITY


def _cmd_probe(args) -> int:
    minima = probe_with_slope(args.slope, batches=args.batches)
    dead = [name for name, value in minima.items() if value == 0.0]
    for name, value in minima.items():
        print(f"{name:20s} min grad norm {value:.3e}")
    if dead:
        print(f"{len(dead)} layer(s) went silent: {', '.join(dead)}")
        return EXIT_VALIDATION
    print(f"all {len(minima)} decoder layers stayed live over {args.batches} batches")
    return EXIT_OK


_COMMANDS = {
    "make-data": _cmd_make_data,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "parity": _cmd_parity,
    "probe": _cmd_probe,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
