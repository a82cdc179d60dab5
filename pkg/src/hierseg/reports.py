"""Delimited reports and companion figures.

Every report writes a CSV and, next to it, matplotlib figures rendered to
PNG files: the schedule dump gets its curves, and the annotation stats get
level-distribution and labels-per-image charts.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .detjson import load_json_file
from .errors import ParseError
from .hierarchy import HierLevel
from .schedule import ScheduleConfig, schedule_rows

LEVEL_NAMES = {HierLevel.WHOLE: "whole", HierLevel.PART: "part", HierLevel.SUBPART: "subpart"}


def write_schedule_csv(
    cfg: ScheduleConfig, out_csv: str | Path, figure: bool = True
) -> list[Path]:
    """Dump (iter, lr, label weight, teacher weight) rows; returns paths written."""
    out_csv = Path(out_csv)
    rows = list(schedule_rows(cfg))
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "lr", "alpha_label", "alpha_teacher"])
        writer.writerows(rows)
    written = [out_csv]
    if figure:
        iters = [r[0] for r in rows]
        fig, (ax_lr, ax_w) = plt.subplots(1, 2, figsize=(10, 4))
        ax_lr.plot(iters, [r[1] for r in rows], color="tab:blue")
        ax_lr.set_xlabel("iteration")
        ax_lr.set_ylabel("learning rate")
        ax_lr.axvline(cfg.burn_in_iters, color="gray", linestyle=":", linewidth=1)
        ax_w.plot(iters, [r[2] for r in rows], label="label branch", color="tab:orange")
        ax_w.plot(iters, [r[3] for r in rows], label="teacher branch", color="tab:green")
        ax_w.axvline(cfg.burn_in_iters, color="gray", linestyle=":", linewidth=1)
        ax_w.set_xlabel("iteration")
        ax_w.set_ylabel("loss weight")
        ax_w.legend()
        fig.tight_layout()
        fig_path = out_csv.with_suffix(".png")
        fig.savefig(fig_path, dpi=120)
        plt.close(fig)
        written.append(fig_path)
    return written


def write_generate_stats(stats_rows: list[dict], out_csv: str | Path) -> Path:
    """Per-image stats CSV emitted by the generate command."""
    out_csv = Path(out_csv)
    if not stats_rows:
        out_csv.write_text("", encoding="utf-8")
        return out_csv
    fields = list(stats_rows[0].keys())
    with out_csv.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(stats_rows)
    return out_csv


def annotation_stats(annotations_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Summarize an annotation file into a CSV plus figures."""
    data = load_json_file(annotations_path)
    if not isinstance(data, dict) or "annotations" not in data:
        raise ParseError(f"{annotations_path}: expected an annotations object")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    anns = data["annotations"]
    n_images = len(data.get("images", []))
    level_counts = Counter(HierLevel(a["category_id"]) for a in anns)
    per_image = Counter(a["image_id"] for a in anns)
    labels_per_image = [per_image.get(im["id"], 0) for im in data.get("images", [])]
    areas = [a.get("area", 0) for a in anns]

    csv_path = out_dir / "stats.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["images", n_images])
        writer.writerow(["annotations", len(anns)])
        for level in HierLevel:
            writer.writerow([f"n_{LEVEL_NAMES[level]}", level_counts.get(level, 0)])
        if labels_per_image:
            writer.writerow(["labels_per_image_mean", sum(labels_per_image) / n_images])
        if areas:
            writer.writerow(["mask_area_mean", sum(areas) / len(areas)])
    written = [csv_path]

    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    names = [LEVEL_NAMES[level] for level in HierLevel]
    axes[0].bar(names, [level_counts.get(level, 0) for level in HierLevel],
                color=["tab:blue", "tab:orange", "tab:green"])
    axes[0].set_title("masks per level")
    if labels_per_image:
        axes[1].hist(labels_per_image, bins=min(20, max(labels_per_image) + 1 or 1))
    axes[1].set_title("labels per image")
    if areas:
        axes[2].hist(areas, bins=20)
    axes[2].set_title("mask area (px)")
    fig.tight_layout()
    fig_path = out_dir / "stats.png"
    fig.savefig(fig_path, dpi=120)
    plt.close(fig)
    written.append(fig_path)
    return written
