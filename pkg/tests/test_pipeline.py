from __future__ import annotations

import json

import numpy as np
import pytest

from hierseg.detjson import load_ground_truth
from hierseg.errors import ConfigError
from hierseg.features import write_feature_map
from hierseg.hierarchy import HierLevel
from hierseg.pipeline import (
    PipelineConfig,
    generate,
    load_config,
    process_feature_map,
)

from conftest import make_feature_map


def two_region_map(grid=2, dim=2, patch_size=8, image_id="two"):
    """Left columns one feature, right columns an orthogonal one."""
    data = np.zeros((grid, grid, dim), dtype=np.float32)
    data[:, : grid // 2, 0] = 1.0
    data[:, grid // 2 :, 1] = 1.0
    return make_feature_map(data, patch_size=patch_size, image_id=image_id)


def homogeneous_map(grid=4, dim=3, image_id="flat"):
    return make_feature_map(
        np.ones((grid, grid, dim), dtype=np.float32), patch_size=8, image_id=image_id
    )


class TestProcessFeatureMap:
    def test_two_region_map_yields_two_whole_masks(self):
        result = process_feature_map(two_region_map(grid=4), None, PipelineConfig())
        assert len(result.masks) == 2
        assert result.levels == [HierLevel.WHOLE, HierLevel.WHOLE]
        assert all(r.pre_crf_iou == 1.0 for r in result.masks)

    def test_homogeneous_map_filtered_by_corner_rule(self):
        result = process_feature_map(homogeneous_map(), None, PipelineConfig())
        assert result.masks == []
        assert all(count == 0 for count in result.per_threshold_counts.values())

    def test_per_threshold_counts_keyed_by_config(self):
        cfg = PipelineConfig(thresholds=(0.5, 0.25))
        result = process_feature_map(two_region_map(grid=4), None, cfg)
        assert set(result.per_threshold_counts) == {0.5, 0.25}


class TestConfigFile:
    def test_round_trip_of_all_keys(self, tmp_path):
        text = """
        # pipeline settings
        thresholds = 0.5, 0.3, 0.15
        cover_percent = 85
        crf_enabled = true
        crf_iterations = 4
        crf_sigma_spatial = 2.5
        crf_weight_spatial = 2.0
        crf_sigma_bilateral_xy = 40
        crf_sigma_bilateral_rgb = 6
        crf_weight_bilateral = 8
        crf_unary_confidence = 0.8
        min_area_px = 64
        max_corner_count = 1
        dedup_iou = 0.9
        worker_count = 2
        connectivity = 8
        npy_patch_size = 16
        """
        path = tmp_path / "pipeline.cfg"
        path.write_text(text, encoding="utf-8")
        cfg = load_config(path)
        assert cfg.thresholds == (0.5, 0.3, 0.15)
        assert cfg.cover_percent == 85
        assert cfg.crf_enabled is True
        assert cfg.crf.iterations == 4
        assert cfg.crf.unary_confidence == 0.8
        assert cfg.min_area_px == 64
        assert cfg.max_corner_count == 1
        assert cfg.dedup_iou == 0.9
        assert cfg.worker_count == 2
        assert cfg.connectivity == 8
        assert cfg.npy_patch_size == 16

    def test_unknown_key_is_an_error(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("thresholdz = 0.4\n", encoding="utf-8")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert "thresholdz" in str(excinfo.value)

    def test_bad_value_reports_line(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("\nmin_area_px = many\n", encoding="utf-8")
        with pytest.raises(ConfigError) as excinfo:
            load_config(path)
        assert ":2:" in str(excinfo.value)

    def test_missing_equals_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("just some words\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_invalid_combination_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig(thresholds=(0.2, 0.4))
        with pytest.raises(ConfigError):
            PipelineConfig(cover_percent=0)
        with pytest.raises(ConfigError):
            PipelineConfig(worker_count=0)


class TestGenerate:
    def _feature_dir(self, tmp_path, n_images=3):
        feature_dir = tmp_path / "features"
        feature_dir.mkdir()
        for i in range(n_images):
            fm = two_region_map(grid=4, image_id=f"img{i}")
            write_feature_map(fm, feature_dir / f"img{i}.fmap")
        return feature_dir

    def test_writes_annotations_and_stats(self, tmp_path):
        feature_dir = self._feature_dir(tmp_path)
        out = tmp_path / "ann.json"
        report = generate(feature_dir, out, PipelineConfig())
        assert report.exit_code == 0
        assert len(report.results) == 3
        images, gts = load_ground_truth(out)
        assert len(images) == 3
        assert len(gts) == 6  # two masks per image
        assert {row["image_id"] for row in report.stats_rows} == {"img0", "img1", "img2"}

    def test_category_ids_are_levels(self, tmp_path):
        feature_dir = self._feature_dir(tmp_path, n_images=1)
        out = tmp_path / "ann.json"
        generate(feature_dir, out, PipelineConfig())
        data = json.loads(out.read_text(encoding="utf-8"))
        assert {a["category_id"] for a in data["annotations"]} == {int(HierLevel.WHOLE)}
        assert [c["id"] for c in data["categories"]] == [1, 2, 3]

    def test_npy_inputs_supported(self, tmp_path):
        feature_dir = tmp_path / "features"
        feature_dir.mkdir()
        fm = two_region_map(grid=4, image_id="npyimg")
        np.save(feature_dir / "npyimg.npy", fm.data)
        out = tmp_path / "ann.json"
        report = generate(feature_dir, out, PipelineConfig())
        assert report.exit_code == 0
        assert len(report.results[0].masks) == 2

    def test_corrupt_file_skipped_with_partial_exit(self, tmp_path):
        feature_dir = self._feature_dir(tmp_path, n_images=2)
        (feature_dir / "zzz.fmap").write_bytes(b"FMAPgarbage")
        out = tmp_path / "ann.json"
        report = generate(feature_dir, out, PipelineConfig())
        assert report.exit_code == 2
        assert len(report.results) == 2
        assert report.failures and "zzz.fmap" in report.failures[0][0]

    def test_all_corrupt_is_fatal_exit(self, tmp_path):
        feature_dir = tmp_path / "features"
        feature_dir.mkdir()
        (feature_dir / "bad.fmap").write_bytes(b"nope")
        report = generate(feature_dir, tmp_path / "ann.json", PipelineConfig())
        assert report.exit_code == 1
        assert not (tmp_path / "ann.json").exists()

    def test_empty_directory_rejected(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(ConfigError):
            generate(empty, tmp_path / "ann.json", PipelineConfig())

    def test_worker_count_does_not_change_bytes(self, tmp_path):
        feature_dir = self._feature_dir(tmp_path, n_images=4)
        outputs = []
        for workers in (1, 3):
            out = tmp_path / f"ann_w{workers}.json"
            cfg = PipelineConfig(worker_count=workers)
            report = generate(feature_dir, out, cfg)
            assert report.exit_code == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
