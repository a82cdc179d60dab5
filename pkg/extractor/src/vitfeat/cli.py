"""Command-line entry point: extract patch features into FMAP/npy files."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import VitfeatError
from .extract import ExtractorConfig, run_extraction
from .model import ARCHS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vitfeat",
        description="Export frozen ViT patch features for a directory of images.",
    )
    parser.add_argument("--images", required=True, help="input image directory")
    parser.add_argument("--out", required=True, help="output feature directory")
    parser.add_argument("--resolution", type=int, default=480,
                        help="square resize applied before extraction")
    parser.add_argument("--arch", default="vit-b-8", choices=sorted(ARCHS))
    parser.add_argument("--weights", help="checkpoint path; random init (seeded) when omitted")
    parser.add_argument("--batch-size", type=int, default=4, dest="batch_size")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0, help="seed for random initialization")
    parser.add_argument("--format", default="fmap", choices=("fmap", "npy"), dest="out_format",
                        help="fmap (primary) or the npy compatibility container")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    cfg = ExtractorConfig(
        arch=args.arch,
        resolution=args.resolution,
        out_dir=args.out,
        batch_size=args.batch_size,
        device=args.device,
        weights=args.weights,
        seed=args.seed,
        out_format=args.out_format,
    )
    try:
        report = run_extraction(args.images, cfg)
    except VitfeatError as exc:
        logging.getLogger("vitfeat").error("%s", exc)
        return 1
    print(f"wrote {len(report.written)} feature file(s) to {args.out}")
    for path, message in report.skipped:
        print(f"skipped {path}: {message}", file=sys.stderr)
    if report.skipped and not report.written:
        return 1
    return 2 if report.skipped else 0


if __name__ == "__main__":
    sys.exit(main())
