"""Raster model and portable scene format."""

import json
import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from riverwatch.raster import (
    NODATA_CLASS,
    ClassRaster,
    Raster,
    SceneFormatError,
    SceneMetadata,
    SENSOR_PROFILES,
    load_scene,
    parse_band_label,
    pixel_area_m2,
    save_scene,
)

TS = datetime(2024, 5, 1, 9, 30, tzinfo=timezone.utc)


def make_metadata(**overrides):
    base = dict(
        scene_id="s1",
        sensor="planetscope",
        acquired_at=TS,
        pixel_size_m=3.0,
        band_labels=("blue", "green", "red", "nir"),
        width=4,
        height=3,
    )
    base.update(overrides)
    return SceneMetadata(**base)


class TestBandLabels:
    def test_core_bands_case_insensitive(self):
        assert parse_band_label("NIR") == "nir"
        assert parse_band_label("Blue") == "blue"
        assert parse_band_label(" Red ") == "red"

    def test_other_labels_kept_verbatim(self):
        assert parse_band_label("B8A") == "B8A"
        assert parse_band_label("SWIR1") == "SWIR1"

    def test_empty_label_rejected(self):
        with pytest.raises(SceneFormatError):
            parse_band_label("   ")

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            make_metadata(band_labels=("nir", "NIR"))


class TestSceneMetadata:
    def test_naive_timestamp_becomes_utc(self):
        md = make_metadata(acquired_at=datetime(2024, 5, 1, 9, 30))
        assert md.acquired_at.tzinfo == timezone.utc

    def test_pixel_area(self):
        assert pixel_area_m2(make_metadata(pixel_size_m=10.0)) == 100.0
        assert pixel_area_m2(make_metadata(pixel_size_m=3.0)) == 9.0

    @pytest.mark.parametrize("field,value", [
        ("pixel_size_m", 0), ("pixel_size_m", -1),
        ("width", 0), ("height", -5), ("scene_id", ""),
    ])
    def test_invalid_fields(self, field, value):
        with pytest.raises(ValueError):
            make_metadata(**{field: value})

    def test_sensor_profiles(self):
        assert len(SENSOR_PROFILES["sentinel2"].band_labels) == 13
        assert len(SENSOR_PROFILES["planetscope"].band_labels) == 4
        assert SENSOR_PROFILES["sentinel2"].pixel_size_m == 10.0


class TestRaster:
    def test_band_lookup(self):
        md = make_metadata()
        samples = np.arange(md.sample_count, dtype=np.float32)
        r = Raster(md, samples)
        assert r.band("NIR").shape == (3, 4)
        assert r.band("nir")[0, 0] == 36.0

    def test_unknown_band(self):
        r = Raster(make_metadata(), np.zeros(48, dtype=np.float32))
        with pytest.raises(KeyError, match="SWIR1"):
            r.band("SWIR1")

    def test_sample_count_mismatch(self):
        with pytest.raises(ValueError, match="sample count"):
            Raster(make_metadata(), np.zeros(10, dtype=np.float32))

    def test_infinity_rejected(self):
        samples = np.zeros(48, dtype=np.float32)
        samples[5] = np.inf
        with pytest.raises(ValueError):
            Raster(make_metadata(), samples)

    def test_nan_rejected_with_finite_nodata(self):
        samples = np.zeros(48, dtype=np.float32)
        samples[5] = np.nan
        with pytest.raises(ValueError):
            Raster(make_metadata(nodata=-9999.0), samples)

    def test_valid_mask_nan_nodata(self):
        samples = np.zeros(48, dtype=np.float32)
        samples[0] = np.nan
        r = Raster(make_metadata(), samples)
        mask = r.valid_mask()
        assert not mask[0, 0]
        assert mask.sum() == 11

    def test_valid_mask_finite_nodata(self):
        samples = np.ones(48, dtype=np.float32)
        samples[1] = -9999.0
        r = Raster(make_metadata(nodata=-9999.0), samples)
        assert r.valid_mask().sum() == 11

    def test_samples_read_only(self):
        r = Raster(make_metadata(), np.zeros(48, dtype=np.float32))
        with pytest.raises(ValueError):
            r.samples[0, 0, 0] = 1.0


class TestClassRaster:
    def test_nodata_confidence_must_be_zero(self):
        ids = np.full((2, 2), NODATA_CLASS, dtype=np.uint8)
        with pytest.raises(ValueError):
            ClassRaster(ids, np.full((2, 2), 0.5, np.float32), ("a",))

    def test_class_id_bounds(self):
        ids = np.array([[0, 3]], dtype=np.uint8)
        with pytest.raises(ValueError):
            ClassRaster(ids, np.zeros((1, 2), np.float32), ("a", "b"))

    def test_valid_mask(self):
        ids = np.array([[0, NODATA_CLASS]], dtype=np.uint8)
        cr = ClassRaster(ids, np.array([[1.0, 0.0]], np.float32), ("a",))
        assert cr.valid_mask().tolist() == [[True, False]]


class TestSceneIO:
    def test_round_trip_preserves_order_and_bytes(self, tmp_path):
        md = make_metadata(band_labels=("Blue", "Green", "Red", "NIR"))
        rng = np.random.default_rng(1)
        r = Raster(md, rng.random(md.sample_count, dtype=np.float32))
        save_scene(r, tmp_path / "scene")
        back = load_scene(tmp_path / "scene")
        assert back.metadata.band_labels == ("blue", "green", "red", "nir")
        assert back.metadata == r.metadata
        assert back.samples.tobytes() == r.samples.tobytes()

    def test_missing_metadata(self, tmp_path):
        with pytest.raises(SceneFormatError, match="missing"):
            load_scene(tmp_path)

    def test_malformed_json(self, tmp_path):
        (tmp_path / "scene.json").write_text("{nope")
        with pytest.raises(SceneFormatError, match="malformed"):
            load_scene(tmp_path)

    def test_payload_size_mismatch(self, tmp_path):
        md = make_metadata()
        save_scene(Raster(md, np.zeros(md.sample_count, np.float32)), tmp_path / "s")
        (tmp_path / "s" / "bands.bin").write_bytes(b"\x00" * 7)
        with pytest.raises(SceneFormatError, match="expected"):
            load_scene(tmp_path / "s")

    def test_duplicate_band_labels_on_load(self, tmp_path):
        md = make_metadata()
        save_scene(Raster(md, np.zeros(md.sample_count, np.float32)), tmp_path / "s")
        doc = json.loads((tmp_path / "s" / "scene.json").read_text())
        doc["bands"] = ["nir", "NIR", "red", "blue"]
        (tmp_path / "s" / "scene.json").write_text(json.dumps(doc))
        with pytest.raises(SceneFormatError, match="duplicate"):
            load_scene(tmp_path / "s")

    def test_nodata_nan_serialized_as_string(self, tmp_path):
        md = make_metadata()
        save_scene(Raster(md, np.zeros(md.sample_count, np.float32)), tmp_path / "s")
        doc = json.loads((tmp_path / "s" / "scene.json").read_text())
        assert doc["nodata"] == "nan"

    def test_no_partial_files_after_failed_save(self, tmp_path, monkeypatch):
        md = make_metadata()
        r = Raster(md, np.zeros(md.sample_count, np.float32))
        target = tmp_path / "s"

        import riverwatch.raster as rw

        def boom(src, dst):
            raise OSError("disk full")

        monkeypatch.setattr(rw.os, "replace", boom)
        with pytest.raises(OSError):
            save_scene(r, target)
        monkeypatch.undo()
        leftovers = list(target.iterdir()) if target.exists() else []
        assert leftovers == []

    @settings(max_examples=40, deadline=None)
    @given(
        samples=hnp.arrays(
            dtype=np.float32,
            shape=st.tuples(st.integers(1, 3), st.integers(1, 5), st.integers(1, 5)),
            elements=st.floats(width=32, allow_infinity=False),
        )
    )
    def test_round_trip_bit_exact_including_nan(self, samples, tmp_path_factory):
        """Any float32 payload (NaN included) survives save/load bit for bit."""
        n_bands, h, w = samples.shape
        md = make_metadata(
            band_labels=tuple(f"b{i}" for i in range(n_bands)), width=w, height=h
        )
        r = Raster(md, samples)
        d = tmp_path_factory.mktemp("scene")
        save_scene(r, d)
        back = load_scene(d)
        assert back.samples.tobytes() == r.samples.tobytes()
        assert back.metadata == r.metadata


def test_nodata_sentinel_round_trip(tmp_path):
    md = make_metadata(nodata=-9999.0)
    samples = np.full(md.sample_count, -9999.0, dtype=np.float32)
    save_scene(Raster(md, samples), tmp_path / "s")
    back = load_scene(tmp_path / "s")
    assert back.metadata.nodata == -9999.0
    assert not back.valid_mask().any()


def test_geo_field_round_trip(tmp_path):
    md = make_metadata(geo="EPSG:32634 699960 5100000")
    save_scene(Raster(md, np.zeros(md.sample_count, np.float32)), tmp_path / "s")
    assert load_scene(tmp_path / "s").metadata.geo == md.geo
