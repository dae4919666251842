"""Detection pipelines, reports, and renderers."""

import io
from datetime import datetime, timezone

import numpy as np
import pytest
from PIL import Image

from riverwatch import synthetic
from riverwatch.forest import Hyperparams, extract_training_set, train_forest
from riverwatch.indices import compute_feature_stack
from riverwatch.morphology import Kernel, dilate, opening
from riverwatch.pipelines import (
    BLOCKAGE,
    CLASS_COLORS,
    HOTSPOT,
    WASTE,
    WASTE_CLASSES,
    WATER,
    class_raster_to_scene,
    classify,
    feature_mode_for,
    png_bytes,
    render_classification,
    render_heatmap,
    run_blockage,
    run_hotspot,
    scene_to_class_raster,
    write_png,
)
from riverwatch.raster import NODATA_CLASS, ClassRaster

TS = datetime(2024, 6, 1, 10, 0, tzinfo=timezone.utc)


def make_class_raster(ids, confidence=None):
    ids = np.asarray(ids, dtype=np.uint8)
    if confidence is None:
        confidence = np.where(ids == NODATA_CLASS, 0.0, 1.0)
    return ClassRaster(
        class_ids=ids,
        confidence=np.asarray(confidence, dtype=np.float32),
        class_names=WASTE_CLASSES,
    )


@pytest.fixture(scope="module")
def river_forest(stripe_forest):
    # The stripe forest is trained on all five classes and transfers to any
    # layout rendered from the same spectral signatures.
    return stripe_forest


class TestFeatureMode:
    def test_nine_core_features_map_to_cross_sensor(self, stripe_forest):
        assert feature_mode_for(stripe_forest.feature_names) == "cross-sensor"

    def test_anything_else_maps_to_sentinel_full(self):
        assert feature_mode_for(("blue", "green")) == "sentinel-full"


class TestReports:
    def test_area_scales_with_pixel_size(self, river_forest):
        cmap = synthetic.landfill_layout(20, 20, blob=10)
        scene = synthetic.scene_from_classes(cmap, pixel_size_m=10.0, seed=4)
        _, report = run_hotspot(scene, river_forest)
        assert report.waste_pixels == 100
        assert report.waste_area_m2 == 10000.0
        assert report.total_valid_pixels == 400
        assert report.waste_fraction == 0.25
        assert report.pipeline == HOTSPOT
        assert not report.quality_warning

    def test_report_identities(self, river_forest):
        cmap = synthetic.five_class_layout(40, 40)
        scene = synthetic.scene_from_classes(cmap, seed=5)
        cr, report = run_hotspot(scene, river_forest)
        assert report.waste_pixels == int(np.count_nonzero(cr.class_ids == WASTE))
        assert report.total_valid_pixels == int(np.count_nonzero(cr.valid_mask()))
        assert report.waste_fraction == report.waste_pixels / report.total_valid_pixels
        area = report.waste_pixels * scene.metadata.pixel_size_m**2
        assert report.waste_area_m2 == area
        assert report.timestamp == scene.metadata.acquired_at
        assert report.scene_id == scene.metadata.scene_id

    def test_all_nodata_scene_warns(self, river_forest):
        cmap = np.zeros((8, 8), dtype=np.int64)
        scene = synthetic.scene_from_classes(cmap, nodata_mask=np.ones((8, 8), bool))
        _, report = run_hotspot(scene, river_forest)
        assert report.total_valid_pixels == 0
        assert report.waste_pixels == 0
        assert report.waste_fraction == 0.0
        assert report.quality_warning

    def test_to_dict_round_trips_through_json(self, river_forest):
        import json

        scene = synthetic.scene_from_classes(synthetic.landfill_layout(16, 16, 4), seed=6)
        _, report = run_hotspot(scene, river_forest)
        doc = json.loads(json.dumps(report.to_dict()))
        assert doc["scene_id"] == "synthetic"
        assert doc["timestamp"] == "2024-06-01T10:00:00+00:00"
        assert set(doc) == {
            "scene_id", "timestamp", "waste_pixels", "waste_area_m2",
            "total_valid_pixels", "waste_fraction", "pipeline", "quality_warning",
        }


class TestHotspot:
    def test_landfill_recovery_within_five_percent(self, river_forest):
        cmap = synthetic.landfill_layout(64, 64, blob=16)
        scene = synthetic.scene_from_classes(cmap, seed=9)
        _, report = run_hotspot(scene, river_forest)
        assert abs(report.waste_pixels - 256) <= 0.05 * 256

    def test_waste_water_checkerboard(self, river_forest):
        cmap = np.indices((32, 32)).sum(axis=0) % 2
        scene = synthetic.scene_from_classes(cmap, noise=0.0)
        cr, report = run_hotspot(scene, river_forest)
        assert np.array_equal(cr.class_ids, cmap.astype(np.uint8))
        assert report.waste_pixels == 512
        assert report.waste_fraction == 0.5

    def test_nodata_pixels_stay_out_of_the_count(self, river_forest):
        cmap = np.zeros((16, 16), dtype=np.int64)
        mask = np.zeros((16, 16), bool)
        mask[:4] = True
        scene = synthetic.scene_from_classes(cmap, noise=0.0, nodata_mask=mask)
        cr, report = run_hotspot(scene, river_forest)
        assert (cr.class_ids[:4] == NODATA_CLASS).all()
        assert report.total_valid_pixels == 192
        assert report.waste_pixels == 192


@pytest.fixture(scope="module")
def blockage_run(river_forest):
    cmap, layout = synthetic.blockage_layout(128, 128)
    scene = synthetic.scene_from_classes(cmap, noise=0.0)
    masked, cleaned, report = run_blockage(scene, river_forest)
    return cmap, layout, masked, cleaned, report


class TestBlockage:
    def test_island_counted_specks_dropped(self, blockage_run):
        cmap, layout, masked, cleaned, report = blockage_run
        assert report.waste_pixels == 64
        for r, c in layout["specks"]:
            assert not cleaned[r, c]
            assert masked.class_ids[r, c] == NODATA_CLASS

    def test_mask_containments(self, blockage_run, river_forest):
        cmap, layout, masked, cleaned, report = blockage_run
        scene = synthetic.scene_from_classes(cmap, noise=0.0)
        cr = classify(scene, river_forest)
        binary = (cr.class_ids == WASTE) | (cr.class_ids == WATER)
        opened = opening(binary, Kernel())
        assert ((~cleaned) | dilate(binary, Kernel())).all()
        assert ((~opened) | cleaned).all()

    def test_masked_raster_is_classification_restricted_to_mask(self, blockage_run):
        cmap, layout, masked, cleaned, report = blockage_run
        assert (masked.class_ids[~cleaned] == NODATA_CLASS).all()
        assert (masked.confidence[~cleaned] == 0.0).all()
        inside = masked.class_ids[cleaned]
        assert set(np.unique(inside)) <= {WASTE, WATER, 2, 3, 4}

    def test_report_metadata(self, blockage_run):
        _, _, _, _, report = blockage_run
        assert report.pipeline == BLOCKAGE
        assert report.total_valid_pixels == 128 * 128

    def test_never_counts_more_than_hotspot(self, river_forest):
        cmap, _ = synthetic.blockage_layout(96, 96)
        scene = synthetic.scene_from_classes(cmap, seed=12)
        _, hotspot = run_hotspot(scene, river_forest)
        _, _, blockage = run_blockage(scene, river_forest)
        assert blockage.waste_pixels <= hotspot.waste_pixels
        assert blockage.total_valid_pixels == hotspot.total_valid_pixels

    def test_larger_kernel_is_stricter(self, river_forest):
        cmap, layout = synthetic.blockage_layout(128, 128)
        cmap[layout["island"]] = 1
        cmap[60:63, 80:83] = 0  # isolated 3x3 patch: survives k=3, not k=7
        scene = synthetic.scene_from_classes(cmap, noise=0.0)
        _, _, small = run_blockage(scene, river_forest, Kernel(3))
        _, _, large = run_blockage(scene, river_forest, Kernel(7))
        assert small.waste_pixels == 9
        assert large.waste_pixels == 0


class TestClassificationRenderer:
    def test_palette_is_exact(self):
        ids = np.arange(5, dtype=np.uint8).reshape(1, 5)
        rgba = render_classification(make_class_raster(ids))
        expected = np.array([(*rgb, 255) for rgb in CLASS_COLORS], dtype=np.uint8)
        assert np.array_equal(rgba[0], expected)

    def test_waste_is_red(self):
        rgba = render_classification(make_class_raster([[WASTE]]))
        assert rgba[0, 0].tolist() == [255, 0, 4, 255]

    def test_nodata_transparent(self):
        rgba = render_classification(make_class_raster([[NODATA_CLASS]]))
        assert rgba[0, 0].tolist() == [0, 0, 0, 0]

    def test_all_nodata_fully_transparent(self):
        ids = np.full((6, 6), NODATA_CLASS, dtype=np.uint8)
        rgba = render_classification(make_class_raster(ids))
        assert (rgba[..., 3] == 0).all()

    def test_out_of_palette_id_rejected(self):
        # A six-class raster is structurally fine but has no sixth color.
        cr = ClassRaster(
            class_ids=np.array([[5]], dtype=np.uint8),
            confidence=np.ones((1, 1), dtype=np.float32),
            class_names=(*WASTE_CLASSES, "extra"),
        )
        with pytest.raises(ValueError, match="palette"):
            render_classification(cr)


class TestHeatmapRenderer:
    def bin_of(self, confidence):
        cr = make_class_raster([[WASTE]], [[confidence]])
        return render_heatmap(cr)[0, 0].tolist()

    def test_bin_colors(self):
        assert self.bin_of(0.95) == [255, 0, 4, 255]
        assert self.bin_of(0.85) == [246, 221, 0, 255]
        assert self.bin_of(0.75) == [6, 205, 16, 255]
        assert self.bin_of(0.65) == [0, 0, 0, 0]

    def test_edges_are_closed_below(self):
        assert self.bin_of(0.9) == [255, 0, 4, 255]
        assert self.bin_of(0.8) == [246, 221, 0, 255]
        assert self.bin_of(0.7) == [6, 205, 16, 255]

    def test_vote_fraction_matches_literal_edge(self):
        # 90 of 100 votes stored as float32 must land with a literal 0.9.
        votes = np.float32(np.float64(90) / np.float64(100))
        assert self.bin_of(votes) == self.bin_of(0.9)

    def test_non_waste_transparent_even_when_confident(self):
        for cid in (WATER, 2, 3, 4):
            cr = make_class_raster([[cid]], [[0.99]])
            assert render_heatmap(cr)[0, 0, 3] == 0
        nodata = make_class_raster([[NODATA_CLASS]], [[0.0]])
        assert render_heatmap(nodata)[0, 0, 3] == 0

    def test_mixed_scene(self):
        ids = np.array([[WASTE, WASTE], [WATER, NODATA_CLASS]], dtype=np.uint8)
        conf = np.array([[0.92, 0.71], [0.99, 0.0]], dtype=np.float32)
        rgba = render_heatmap(make_class_raster(ids, conf))
        assert rgba[0, 0].tolist() == [255, 0, 4, 255]
        assert rgba[0, 1].tolist() == [6, 205, 16, 255]
        assert rgba[1, 0, 3] == 0
        assert rgba[1, 1, 3] == 0


class TestPng:
    def test_bytes_decode_back(self):
        rgba = render_classification(make_class_raster(np.arange(4, dtype=np.uint8).reshape(2, 2)))
        img = Image.open(io.BytesIO(png_bytes(rgba)))
        assert img.size == (2, 2)
        assert np.array_equal(np.asarray(img), rgba)

    def test_write_png(self, tmp_path):
        rgba = np.zeros((3, 3, 4), dtype=np.uint8)
        out = tmp_path / "x.png"
        write_png(rgba, out)
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            png_bytes(np.zeros((3, 3, 3), dtype=np.uint8))


class TestClassRasterScenes:
    def test_round_trip(self, river_forest, stripe_scene):
        scene, _ = stripe_scene
        cr = classify(scene, river_forest)
        packed = class_raster_to_scene(cr, scene.metadata)
        back = scene_to_class_raster(packed)
        assert np.array_equal(back.class_ids, cr.class_ids)
        assert np.array_equal(back.confidence, cr.confidence)
        assert back.class_names == cr.class_names

    def test_round_trip_through_disk(self, river_forest, stripe_scene, tmp_path):
        from riverwatch.raster import load_scene, save_scene

        scene, _ = stripe_scene
        cr = classify(scene, river_forest)
        save_scene(class_raster_to_scene(cr, scene.metadata), tmp_path / "cls")
        back = scene_to_class_raster(load_scene(tmp_path / "cls"))
        assert np.array_equal(back.class_ids, cr.class_ids)
        assert np.array_equal(back.confidence, cr.confidence)

    def test_nodata_id_survives(self):
        ids = np.array([[NODATA_CLASS, WASTE]], dtype=np.uint8)
        cr = make_class_raster(ids, [[0.0, 1.0]])
        md = synthetic.scene_from_classes(np.zeros((1, 2), np.int64)).metadata
        back = scene_to_class_raster(class_raster_to_scene(cr, md))
        assert back.class_ids[0, 0] == NODATA_CLASS

    def test_rejects_ordinary_scene(self, stripe_scene):
        scene, _ = stripe_scene
        with pytest.raises(ValueError, match="classification"):
            scene_to_class_raster(scene)
