"""Command line entry point.

    spineseg extract  --input volumes/ --output work/
    spineseg restore  --output work/
    spineseg filter   --output work/ --threshold 0.55
    spineseg evaluate --output work/ --input predictions/
    spineseg loss-check --output vectors.jsonl
    spineseg report   --output work/

Exit codes: 0 success, 1 validation, 2 I/O, 3 tolerance or parity failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import SpinesegError
from .pipeline import (
    CommandError,
    EXIT_VALIDATION,
    Workspace,
    cmd_evaluate,
    cmd_extract,
    cmd_filter,
    cmd_losscheck,
    cmd_report,
    cmd_restore,
    resolve_settings,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spineseg",
        description="curate and evaluate spine segmentation slice datasets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="key = value configuration file")
    common.add_argument("--manifest", type=Path, default=None,
                        help="manifest path (default: <workspace>/manifest.jsonl)")
    common.add_argument("--workers", type=int, default=None,
                        help="parallel workers per manifest entry")
    common.add_argument("--force", action="store_true",
                        help="allow reruns that replace existing state")

    p = sub.add_parser("extract", parents=[common],
                       help="slice volume pairs into a workspace")
    p.add_argument("--input", type=Path, required=True,
                   help="directory holding images/ and masks/ volume files")
    p.add_argument("--output", type=Path, required=True, help="workspace directory")

    p = sub.add_parser("restore", parents=[common],
                       help="repair defective mask slices")
    p.add_argument("--output", type=Path, required=True, help="workspace directory")

    p = sub.add_parser("filter", parents=[common],
                       help="assign keep/drop verdicts per slice")
    p.add_argument("--output", type=Path, required=True, help="workspace directory")
    p.add_argument("--threshold", type=float, default=None,
                   help="imbalance threshold, drops strictly above")
    p.add_argument("--imbalance-mode", choices=("dominant_fraction", "max_over_min"),
                   default=None, help="imbalance ratio definition")

    p = sub.add_parser("evaluate", parents=[common],
                       help="score predictions against restored masks")
    p.add_argument("--output", type=Path, required=True, help="workspace directory")
    p.add_argument("--input", type=Path, required=True,
                   help="directory of prediction masks named like restored slices")
    p.add_argument("--tau", type=float, default=None,
                   help="surface dice tolerance in spacing units")

    p = sub.add_parser("loss-check", parents=[common],
                       help="export or verify loss test vectors")
    p.add_argument("--input", type=Path, default=None, help="vector file to verify")
    p.add_argument("--output", type=Path, default=None, help="vector file to write")
    p.add_argument("--gamma", type=float, default=None, help="focal focusing exponent")
    p.add_argument("--alpha-mix", type=float, default=None,
                   help="focal share of the combined loss")

    p = sub.add_parser("report", parents=[common],
                       help="collect manifest state and reports into one page")
    p.add_argument("--output", type=Path, required=True, help="workspace directory")

    return parser


def _flag_values(args: argparse.Namespace) -> dict:
    mapping = {
        "threshold": "filter.threshold",
        "imbalance_mode": "filter.imbalance_mode",
        "tau": "metrics.tau",
        "gamma": "loss.gamma",
        "alpha_mix": "loss.alpha_mix",
        "workers": "run.workers",
    }
    out = {}
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            out[key] = str(value)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        settings = resolve_settings(args.config, _flag_values(args))
        if args.command == "loss-check":
            return cmd_losscheck(settings, input_path=args.input, output_path=args.output)
        ws = Workspace(root=args.output, manifest_override=args.manifest)
        if args.command == "extract":
            return cmd_extract(args.input, ws, settings, force=args.force)
        if args.command == "restore":
            return cmd_restore(ws, settings, force=args.force)
        if args.command == "filter":
            return cmd_filter(ws, settings, force=args.force)
        if args.command == "evaluate":
            return cmd_evaluate(ws, args.input, settings, force=args.force)
        if args.command == "report":
            return cmd_report(ws)
        raise CommandError(EXIT_VALIDATION, f"unknown command {args.command!r}")
    except CommandError as exc:
        print(f"spineseg {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except SpinesegError as exc:
        print(f"spineseg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
