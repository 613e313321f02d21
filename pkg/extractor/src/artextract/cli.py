"""artextract: dump SEMF feature files from classification backbones."""

from __future__ import annotations

import argparse
import sys

from .extract import extract
from .manifest import load_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artextract",
        description="Extract CNN features for a manifest of images into an SEMF file.",
    )
    parser.add_argument("--manifest", required=True, help="extraction manifest (JSON)")
    parser.add_argument("--out", required=True, help="output SEMF path")
    parser.add_argument(
        "--no-pretrained",
        action="store_true",
        help="use randomly initialized weights (for offline smoke tests)",
    )
    parser.add_argument("--seed", type=int, default=0, help="weight seed with --no-pretrained")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = load_manifest(args.manifest)
    except (OSError, KeyError, ValueError) as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return 2
    try:
        report = extract(
            manifest, args.out, pretrained=not args.no_pretrained, seed=args.seed
        )
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"extracted {len(report.extracted)} feature record(s) -> {args.out}")
    for image_id, reason in report.skipped:
        print(f"skipped {image_id}: {reason}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
