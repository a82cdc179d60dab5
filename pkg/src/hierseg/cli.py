"""Command-line entry point.

Subcommands: generate (features -> annotations + stats), eval (metrics),
viz (overlay PNGs), schedule-dump (CSV + figure), stats (annotation
summary + figures). Exit codes: 0 ok, 1 fatal, 2 partial (some images
were skipped).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import reports, viz
from .detjson import load_ground_truth, load_results
from .errors import HiersegError
from .evaluation import IOU_THRESHOLDS, MAX_DETS_DEFAULT, evaluate
from .hierarchy import HierLevel
from .pipeline import PipelineConfig, generate, load_config
from .schedule import ScheduleConfig

logger = logging.getLogger("hierseg")


def _add_generate(sub: argparse._SubParsersAction) -> None:
    p = sub.add_parser("generate", help="cluster feature maps into pseudo-label annotations")
    p.add_argument("--features", required=True, help="directory of .fmap / .npy feature maps")
    p.add_argument("--images", help="optional directory of RGB images (enables refinement)")
    p.add_argument("--out", required=True, help="output annotation JSON path")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--workers", type=int, help="override worker_count")
    p.add_argument("--thresholds", help="comma-separated merge thresholds, e.g. 0.4,0.2,0.1")
    p.add_argument("--cover-percent", type=float, dest="cover_percent")
    p.add_argument("--crf", action="store_true", default=None, help="enable mask refinement")
    p.add_argument("--min-area-px", type=int, dest="min_area_px")
    p.add_argument("--max-corner-count", type=int, dest="max_corner_count")
    p.add_argument("--dedup-iou", type=float, dest="dedup_iou")
    p.add_argument("--npy-patch-size", type=int, dest="npy_patch_size")


def _generate_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = load_config(args.config, cfg)
    overrides = {}
    if args.thresholds:
        overrides["thresholds"] = tuple(float(v) for v in args.thresholds.split(","))
    if args.cover_percent is not None:
        overrides["cover_percent"] = args.cover_percent
    if args.crf:
        overrides["crf_enabled"] = True
    if args.min_area_px is not None:
        overrides["min_area_px"] = args.min_area_px
    if args.max_corner_count is not None:
        overrides["max_corner_count"] = args.max_corner_count
    if args.dedup_iou is not None:
        overrides["dedup_iou"] = args.dedup_iou
    if args.workers is not None:
        overrides["worker_count"] = args.workers
    if args.npy_patch_size is not None:
        overrides["npy_patch_size"] = args.npy_patch_size
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def _cmd_generate(args: argparse.Namespace) -> int:
    cfg = _generate_config(args)
    report = generate(args.features, args.out, cfg, args.images)
    stats_path = Path(args.out).with_suffix(".stats.csv")
    reports.write_generate_stats(report.stats_rows, stats_path)
    total = sum(len(r.masks) for r in report.results)
    print(f"processed {len(report.results)} image(s), wrote {total} annotation(s) to {args.out}")
    print(f"stats written to {stats_path}")
    for path, message in report.failures:
        print(f"skipped {path}: {message}", file=sys.stderr)
    return report.exit_code


def _cmd_eval(args: argparse.Namespace) -> int:
    images, gts = load_ground_truth(args.gt)
    dets = load_results(args.results, images)
    iou_thrs = (
        tuple(float(v) for v in args.iou_thrs.split(",")) if args.iou_thrs else IOU_THRESHOLDS
    )
    max_dets = tuple(sorted({int(v) for v in args.max_dets.split(",")}))
    result = evaluate(dets, gts, iou_thrs=iou_thrs, max_dets=max_dets)
    for kind, metrics in result.to_dict().items():
        print(f"[{kind}]")
        for name, value in metrics.items():
            print(f"  {name:>8}: {value:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"metrics written to {args.out}")
    return 0


def _cmd_viz(args: argparse.Namespace) -> int:
    level = HierLevel[args.level.upper()] if args.level else None
    written = viz.render_overlays(args.annotations, args.images, args.out, level)
    print(f"wrote {len(written)} overlay(s) to {args.out}")
    return 0


def _cmd_schedule_dump(args: argparse.Namespace) -> int:
    cfg = ScheduleConfig(
        total_iters=args.total_iters,
        burn_in_iters=args.burn_in_iters,
        lr_start=args.lr_start,
        lr_end=args.lr_end,
        label_weight_start=args.label_start,
        label_weight_end=args.label_end,
        teacher_weight_start=args.teacher_start,
        teacher_weight_end=args.teacher_end,
        ema_momentum=args.ema_momentum,
    )
    written = reports.write_schedule_csv(cfg, args.out, figure=not args.no_figure)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    written = reports.annotation_stats(args.annotations, args.out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierseg",
        description="Pseudo-label generation, mask hierarchies, and class-agnostic evaluation.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_generate(sub)

    p = sub.add_parser("eval", help="class-agnostic AR/AP over annotation + result files")
    p.add_argument("--gt", required=True, help="ground-truth annotation JSON")
    p.add_argument("--results", required=True, help="detections JSON (or annotation-style file)")
    p.add_argument("--max-dets", default=",".join(str(k) for k in MAX_DETS_DEFAULT),
                   dest="max_dets", help="comma-separated detection caps")
    p.add_argument("--iou-thrs", dest="iou_thrs", help="comma-separated IoU thresholds")
    p.add_argument("--out", help="also write metrics JSON here")

    p = sub.add_parser("viz", help="render mask overlays")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--level", choices=["whole", "part", "subpart"], help="only draw this level")

    p = sub.add_parser("schedule-dump", help="write the training schedule as CSV + figure")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--total-iters", type=int, default=40_000, dest="total_iters")
    p.add_argument("--burn-in-iters", type=int, default=4_000, dest="burn_in_iters")
    p.add_argument("--lr-start", type=float, default=0.01, dest="lr_start")
    p.add_argument("--lr-end", type=float, default=0.0, dest="lr_end")
    p.add_argument("--label-start", type=float, default=1.0, dest="label_start")
    p.add_argument("--label-end", type=float, default=0.0, dest="label_end")
    p.add_argument("--teacher-start", type=float, default=2.0, dest="teacher_start")
    p.add_argument("--teacher-end", type=float, default=3.0, dest="teacher_end")
    p.add_argument("--ema-momentum", type=float, default=0.9996, dest="ema_momentum")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG figure")

    p = sub.add_parser("stats", help="summarize an annotation file (CSV + figures)")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    return parser


_HANDLERS = {
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
    "schedule-dump": _cmd_schedule_dump,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return _HANDLERS[args.command](args)
    except HiersegError as exc:
        logger.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
