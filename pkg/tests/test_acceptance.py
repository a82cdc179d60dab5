"""Acceptance suite: one test per release criterion, each printing a
pass/fail line. Run with ``pytest tests/test_acceptance.py -v -s``."""

from __future__ import annotations

import statistics
import sys
import time
from contextlib import contextmanager

import numpy as np

from hierseg.clustering import ClusterConfig, cluster
from hierseg.evaluation import Detection, GroundTruth, average_precision, match_and_recall
from hierseg.features import write_feature_map
from hierseg.hierarchy import HierLevel, build_forest, covers, level_distribution
from hierseg.pipeline import PipelineConfig, generate
from hierseg.postprocess import filter_masks
from hierseg.rle import RleMask, decode_counts, encode_counts, mask_iou
from hierseg.schedule import ScheduleConfig, ema_update, learning_rate, loss_weights

from conftest import dense_iou, make_feature_map, random_rect_mask, record_from, rect_mask
from oracles import brute_force_cluster, reference_average_precision


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}", file=sys.stderr)
        raise
    print(f"[PASS] {name}")


def partitions_of(snapshots):
    return [{frozenset(r.patches) for r in snap.regions} for snap in snapshots]


def random_thresholds(rng) -> tuple[float, ...]:
    count = int(rng.integers(1, 4))
    values = np.sort(rng.uniform(0.05, 0.95, size=count))[::-1]
    values = np.unique(np.round(values, 6))[::-1]
    return tuple(float(v) for v in values)


def test_clustering_oracle_equivalence():
    """200 random grids: engine partitions match the rescan-everything oracle."""
    rng = np.random.default_rng(1234)
    started = time.monotonic()
    with criterion("clustering matches brute-force oracle on 200 random grids"):
        for case in range(200):
            gh = int(rng.integers(3, 13))
            gw = int(rng.integers(3, 13))
            dim = int(rng.integers(2, 9))
            data = rng.standard_normal((gh, gw, dim))
            data /= np.linalg.norm(data, axis=-1, keepdims=True)
            fm = make_feature_map(data.astype(np.float32), image_id=f"case{case}")
            thresholds = random_thresholds(rng)
            got = partitions_of(cluster(fm, ClusterConfig(thresholds=thresholds)))
            expected = brute_force_cluster(fm, thresholds)
            assert got == expected, f"case {case}: grid {gh}x{gw} dim {dim} thr {thresholds}"
        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"


def _timed_cluster(grid: int, rng) -> float:
    # spatially homogeneous noise: i.i.d. unit feature vectors
    data = rng.standard_normal((grid, grid, 8))
    data /= np.linalg.norm(data, axis=-1, keepdims=True)
    fm = make_feature_map(data.astype(np.float32), image_id=f"noise{grid}")
    cfg = ClusterConfig(thresholds=(0.05,))
    start = time.perf_counter()
    snaps = cluster(fm, cfg)
    elapsed = time.perf_counter() - start
    n = grid * grid
    assert len(snaps[0].regions) < 0.25 * n  # the loop performed real merging work
    return elapsed


def test_merge_complexity_scaling():
    """Quadrupling patch count (900 -> 3600) grows wall time by < 8x."""
    rng = np.random.default_rng(7)
    with criterion("merge loop scales like n log n (900 vs 3600 patches, < 8x)"):
        _timed_cluster(30, rng)  # warm-up
        small = statistics.median(_timed_cluster(30, rng) for _ in range(10))
        large = statistics.median(_timed_cluster(60, rng) for _ in range(10))
        ratio = large / small
        print(f"  n=900: {small * 1e3:.1f} ms, n=3600: {large * 1e3:.1f} ms, ratio {ratio:.2f}")
        assert ratio < 8.0, f"ratio {ratio:.2f}"


def test_postprocess_constants():
    """Filter boundaries: 99/100 px, 3/2 corners, 0.49/0.50 refinement IoU."""
    with criterion("post-processing filter boundaries"):
        h = w = 64
        # area rule
        mask99 = np.zeros((h, w), dtype=bool)
        mask99[10:19, 10:21] = True  # 9 x 11 = 99
        mask100 = np.zeros((h, w), dtype=bool)
        mask100[10:20, 10:20] = True
        r99, r100 = record_from(mask99), record_from(mask100)
        assert filter_masks([r99, r100], w, h) == [r100]
        # corner rule (strips are 2 px wide so the area rule cannot interfere)
        three = np.zeros((h, w), dtype=bool)
        three[:2, :] = True   # corners (0, 0) and (0, w-1)
        three[:, :2] = True   # adds corner (h-1, 0)
        two = np.zeros((h, w), dtype=bool)
        two[:2, :] = True
        r3, r2 = record_from(three), record_from(two)
        assert r2.area_px >= 100 and r3.area_px >= 100
        assert filter_masks([r3, r2], w, h) == [r2]
        # refinement-IoU rule
        base = rect_mask(h, w, 5, 25, 5, 25)
        dropped = record_from(base, pre_crf_iou=0.49)
        kept = record_from(base, pre_crf_iou=0.50)
        assert filter_masks([dropped, kept], w, h) == [kept]


def test_hierarchy_rules():
    """covers() examples, the nested-rectangle forest, and antisymmetry."""
    with criterion("coverage relations and whole/part/subpart levels"):
        # example 1: 80 px fully inside 100 px
        b = rect_mask(20, 20, 0, 10, 0, 10)
        a = rect_mask(20, 20, 0, 8, 0, 10)
        assert covers(a, b, 90, [a, b])
        # example 2: identical masks never cover
        assert not covers(a, a.copy(), 90, [a, a.copy()])
        # example 3: smallest covering candidate wins
        a3 = rect_mask(40, 40, 0, 10, 0, 10)
        b1 = rect_mask(40, 40, 0, 10, 0, 12)
        b2 = rect_mask(40, 40, 0, 20, 0, 25)
        assert covers(a3, b1, 90, [a3, b1, b2])
        assert not covers(a3, b2, 90, [a3, b1, b2])

        # nested-rectangle composition: 1 whole, 2 parts, 3 subparts
        hh = ww = 100
        masks = [
            rect_mask(hh, ww, 10, 90, 10, 90),
            rect_mask(hh, ww, 10, 50, 10, 90),
            rect_mask(hh, ww, 50, 90, 10, 90),
            rect_mask(hh, ww, 15, 35, 15, 35),
            rect_mask(hh, ww, 15, 35, 65, 85),
            rect_mask(hh, ww, 38, 48, 45, 55),
        ]
        forest = build_forest([record_from(m) for m in masks], 90)
        assert forest.parent == [None, 0, 0, 1, 1, 1]
        assert forest.level == [HierLevel.WHOLE] + [HierLevel.PART] * 2 + [HierLevel.SUBPART] * 3
        assert level_distribution(forest) == {
            HierLevel.WHOLE: 1,
            HierLevel.PART: 2,
            HierLevel.SUBPART: 3,
        }

        # antisymmetry on 1000 random mask pairs
        rng = np.random.default_rng(99)
        for _ in range(1000):
            ma = random_rect_mask(rng, 32, 32)
            mb = random_rect_mask(rng, 32, 32)
            both = [ma, mb]
            assert not (covers(ma, mb, 90, both) and covers(mb, ma, 90, both))


def test_schedule_endpoints_and_monotonicity():
    """Endpoint rows exact to 1e-12; monotone at every integer iteration."""
    cfg = ScheduleConfig()
    with criterion("schedule endpoints and per-iteration monotonicity"):
        lr_b = learning_rate(cfg.burn_in_iters, cfg)
        label_b, teacher_b = loss_weights(cfg.burn_in_iters, cfg)
        assert abs(lr_b - 0.01) < 1e-12
        assert abs(label_b - 1.0) < 1e-12
        assert abs(teacher_b - 2.0) < 1e-12
        lr_t = learning_rate(cfg.total_iters, cfg)
        label_t, teacher_t = loss_weights(cfg.total_iters, cfg)
        assert abs(lr_t - 0.0) < 1e-12
        assert abs(label_t - 0.0) < 1e-12
        assert abs(teacher_t - 3.0) < 1e-12

        prev = None
        for it in range(cfg.total_iters + 1):
            lr = learning_rate(it, cfg)
            label_w, teacher_w = loss_weights(it, cfg)
            if prev is not None:
                assert lr <= prev[0] + 1e-15, f"lr not monotone at {it}"
                assert label_w <= prev[1] + 1e-15, f"label weight not monotone at {it}"
                assert teacher_w >= prev[2] - 1e-15, f"teacher weight not monotone at {it}"
            prev = (lr, label_w, teacher_w)


def test_ema_contraction():
    """|ema(t, s, m) - s| == m * |t - s| to 1e-9 over 100 pairs x 4 momenta."""
    rng = np.random.default_rng(42)
    with criterion("EMA update is an exact contraction toward the student"):
        for _ in range(100):
            t = rng.standard_normal(256)
            s = rng.standard_normal(256)
            for m in (0.0, 0.5, 0.9996, 1.0):
                out = ema_update(t, s, m)
                assert abs(np.linalg.norm(out - s) - m * np.linalg.norm(t - s)) < 1e-9


def test_evaluator_correctness():
    """AR 0.3 on the IoU-0.6 pair; AP vs reference; RLE IoU == dense; codec."""
    with criterion("evaluator: recall, AP reference, RLE IoU and codec"):
        gts = [GroundTruth(image_id=1, box=(0, 0, 10, 10))]
        dets = [Detection(image_id=1, box=(0, 0, 6, 10), score=0.9)]
        recalls = match_and_recall(dets, gts)
        assert float(np.mean(recalls)) == 0.3

        gts2 = [GroundTruth(image_id=1, box=(0, 0, 10, 10)),
                GroundTruth(image_id=1, box=(30, 30, 10, 10))]
        dets2 = [
            Detection(image_id=1, box=(0, 0, 10, 10), score=0.9),
            Detection(image_id=1, box=(60, 60, 10, 10), score=0.8),
            Detection(image_id=1, box=(30, 30, 10, 10), score=0.7),
        ]
        got = average_precision(dets2, gts2, 0.5)
        expected = reference_average_precision(
            [(0.9, {0: 1.0}), (0.8, {}), (0.7, {1: 1.0})], n_gt=2, iou_thr=0.5
        )
        assert abs(got - expected) < 1e-4
        assert abs(got - (51 + 50 * 2 / 3) / 101) < 1e-4

        rng = np.random.default_rng(77)
        checked = 0
        while checked < 500:
            a = rng.random((64, 64)) > rng.uniform(0.2, 0.8)
            b = rng.random((64, 64)) > rng.uniform(0.2, 0.8)
            if not (a.any() or b.any()):
                continue
            ra, rb = RleMask.from_dense(a), RleMask.from_dense(b)
            assert mask_iou(ra, rb) == dense_iou(a, b)
            for runs in (ra.runs, rb.runs):
                encoded = encode_counts(runs)
                assert decode_counts(encoded) == runs
                assert encode_counts(decode_counts(encoded)) == encoded
            checked += 1


def test_end_to_end_determinism(tmp_path):
    """generate twice per worker count in {1, 4, 16}: byte-identical files."""
    rng = np.random.default_rng(2024)
    feature_dir = tmp_path / "features"
    feature_dir.mkdir()
    for i in range(6):
        data = rng.standard_normal((8, 8, 6))
        data /= np.linalg.norm(data, axis=-1, keepdims=True)
        # plant blocks of identical features so several regions survive
        data[:4, :4] = data[0, 0]
        data[4:, 4:] = data[7, 7]
        fm = make_feature_map(data.astype(np.float32), image_id=f"synth{i}")
        write_feature_map(fm, feature_dir / f"synth{i}.fmap")

    with criterion("generate output is byte-identical across runs and worker counts"):
        outputs = []
        for workers in (1, 4, 16):
            for attempt in range(2):
                out = tmp_path / f"ann_w{workers}_{attempt}.json"
                report = generate(
                    feature_dir, out, PipelineConfig(worker_count=workers, min_area_px=50)
                )
                assert report.exit_code == 0
                outputs.append(out.read_bytes())
        assert all(blob == outputs[0] for blob in outputs[1:])
