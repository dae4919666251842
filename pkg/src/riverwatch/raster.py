"""In-memory multiband rasters and the portable on-disk scene format.

A scene on disk is a directory holding ``scene.json`` (metadata) and
``bands.bin`` (raw little-endian float32 samples, band-sequential, row-major,
no header). Save/load round-trips are bit-exact, including NaN payloads.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

BLUE = "blue"
GREEN = "green"
RED = "red"
NIR = "nir"
#: Band labels recognized case-insensitively; everything else is kept verbatim.
CORE_BANDS = (BLUE, GREEN, RED, NIR)

#: Class id reserved for pixels without a valid classification.
NODATA_CLASS = 255


class SceneFormatError(ValueError):
    """A scene directory cannot be parsed into a valid raster."""


def parse_band_label(raw: str) -> str:
    """Normalize a band name.

    The core four (blue, green, red, nir) are matched case-insensitively and
    returned in canonical lowercase form; any other non-empty name is kept
    verbatim.
    """
    if not isinstance(raw, str) or not raw.strip():
        raise SceneFormatError("band labels must be non-empty strings")
    stripped = raw.strip()
    lowered = stripped.lower()
    if lowered in CORE_BANDS:
        return lowered
    return stripped


@dataclass(frozen=True)
class SceneMetadata:
    """Acquisition metadata for one scene.

    ``band_labels`` is ordered to match the planes in the sample payload.
    ``nodata`` marks unusable samples; NaN (the default) is compared with
    ``isnan``, a finite sentinel with exact equality.
    """

    scene_id: str
    sensor: str
    acquired_at: datetime
    pixel_size_m: float
    band_labels: tuple[str, ...]
    width: int
    height: int
    nodata: float = math.nan
    geo: str | None = None

    def __post_init__(self):
        if not self.scene_id:
            raise ValueError("scene_id must be non-empty")
        if not (isinstance(self.pixel_size_m, (int, float)) and self.pixel_size_m > 0):
            raise ValueError(f"pixel_size_m must be > 0, got {self.pixel_size_m!r}")
        if not (isinstance(self.width, int) and self.width > 0):
            raise ValueError(f"width must be a positive int, got {self.width!r}")
        if not (isinstance(self.height, int) and self.height > 0):
            raise ValueError(f"height must be a positive int, got {self.height!r}")
        labels = tuple(parse_band_label(b) for b in self.band_labels)
        if not labels:
            raise ValueError("band_labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate band labels: {labels}")
        object.__setattr__(self, "band_labels", labels)
        ts = self.acquired_at
        if not isinstance(ts, datetime):
            raise ValueError("acquired_at must be a datetime")
        if ts.tzinfo is None:
            ts = ts.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "acquired_at", ts.astimezone(timezone.utc))
        object.__setattr__(self, "pixel_size_m", float(self.pixel_size_m))
        object.__setattr__(self, "nodata", float(self.nodata))

    @property
    def n_bands(self) -> int:
        return len(self.band_labels)

    @property
    def sample_count(self) -> int:
        return self.width * self.height * self.n_bands


def pixel_area_m2(metadata: SceneMetadata) -> float:
    """Ground area covered by one pixel, in square meters."""
    return metadata.pixel_size_m ** 2


@dataclass(frozen=True)
class Raster:
    """A multiband float32 raster, immutable after construction.

    ``samples`` has shape (bands, height, width); a flat array with the right
    element count is accepted and reshaped. Samples must be finite or equal to
    the nodata sentinel (NaN nodata permits NaN samples, nothing else permits
    infinities).
    """

    metadata: SceneMetadata
    samples: np.ndarray

    def __post_init__(self):
        md = self.metadata
        arr = np.array(self.samples, dtype=np.float32, order="C")
        if arr.size != md.sample_count:
            raise ValueError(
                f"sample count {arr.size} does not match "
                f"{md.n_bands}x{md.height}x{md.width} = {md.sample_count}"
            )
        arr = arr.reshape(md.n_bands, md.height, md.width)
        if math.isnan(md.nodata):
            bad = np.isinf(arr)
        else:
            bad = ~np.isfinite(arr) & ~(arr == np.float32(md.nodata))
        if bad.any():
            raise ValueError("samples must be finite or equal to the nodata sentinel")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.metadata.width

    @property
    def height(self) -> int:
        return self.metadata.height

    def band(self, label: str) -> np.ndarray:
        """Return the (height, width) read-only plane for one band."""
        label = parse_band_label(label)
        try:
            i = self.metadata.band_labels.index(label)
        except ValueError:
            raise KeyError(
                f"band {label!r} not in scene bands {self.metadata.band_labels}"
            ) from None
        return self.samples[i]

    def valid_mask(self, labels=None) -> np.ndarray:
        """Boolean (height, width) mask of pixels valid in all given bands.

        ``labels`` defaults to every band in the scene.
        """
        if labels is None:
            labels = self.metadata.band_labels
        mask = np.ones((self.height, self.width), dtype=bool)
        nodata = self.metadata.nodata
        for label in labels:
            plane = self.band(label)
            if math.isnan(nodata):
                mask &= ~np.isnan(plane)
            else:
                mask &= plane != np.float32(nodata)
        return mask


@dataclass(frozen=True)
class ClassRaster:
    """Per-pixel class ids with prediction confidence.

    ``class_ids`` is uint8 with 255 (NODATA_CLASS) marking unclassified
    pixels; every other id indexes ``class_names``. Confidence lies in [0, 1]
    and is 0 on nodata pixels.
    """

    class_ids: np.ndarray
    confidence: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        ids = np.asarray(self.class_ids, dtype=np.uint8)
        conf = np.asarray(self.confidence, dtype=np.float32)
        if ids.ndim != 2 or conf.shape != ids.shape:
            raise ValueError("class_ids and confidence must be matching 2-D arrays")
        names = tuple(self.class_names)
        if not names:
            raise ValueError("class_names must be non-empty")
        valid = ids != NODATA_CLASS
        if valid.any() and int(ids[valid].max()) >= len(names):
            raise ValueError("class id out of range for class_names")
        if np.any(conf[~valid] != 0.0):
            raise ValueError("nodata pixels must have confidence 0")
        if np.any(conf < 0.0) or np.any(conf > 1.0):
            raise ValueError("confidence must lie in [0, 1]")
        ids.flags.writeable = False
        conf.flags.writeable = False
        object.__setattr__(self, "class_ids", ids)
        object.__setattr__(self, "confidence", conf)
        object.__setattr__(self, "class_names", names)

    @property
    def height(self) -> int:
        return self.class_ids.shape[0]

    @property
    def width(self) -> int:
        return self.class_ids.shape[1]

    def valid_mask(self) -> np.ndarray:
        return self.class_ids != NODATA_CLASS


@dataclass(frozen=True)
class SensorProfile:
    """Default grid and band layout for a supported imagery source."""

    name: str
    pixel_size_m: float
    band_labels: tuple[str, ...]


SENTINEL2 = SensorProfile(
    name="sentinel2",
    pixel_size_m=10.0,
    band_labels=(
        "B01", BLUE, GREEN, RED, "B05", "B06", "B07", NIR,
        "B8A", "B09", "B10", "B11", "B12",
    ),
)

PLANETSCOPE = SensorProfile(
    name="planetscope",
    pixel_size_m=3.0,
    band_labels=CORE_BANDS,
)

SENSOR_PROFILES = {p.name: p for p in (SENTINEL2, PLANETSCOPE)}


# ---------------------------------------------------------------------------
# Portable scene format
# ---------------------------------------------------------------------------

_SCENE_JSON = "scene.json"
_BANDS_BIN = "bands.bin"


def _metadata_to_json(md: SceneMetadata) -> dict:
    doc = {
        "scene_id": md.scene_id,
        "sensor": md.sensor,
        "acquired_at": md.acquired_at.isoformat(),
        "pixel_size_m": md.pixel_size_m,
        "width": md.width,
        "height": md.height,
        "nodata": "nan" if math.isnan(md.nodata) else md.nodata,
        "bands": list(md.band_labels),
    }
    if md.geo is not None:
        doc["geo"] = md.geo
    return doc


def _parse_timestamp(raw) -> datetime:
    if not isinstance(raw, str):
        raise SceneFormatError(f"acquired_at must be an ISO-8601 string, got {raw!r}")
    text = raw.replace("Z", "+00:00")
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise SceneFormatError(f"bad acquired_at timestamp {raw!r}") from exc
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _metadata_from_json(doc: dict) -> SceneMetadata:
    if not isinstance(doc, dict):
        raise SceneFormatError("scene.json must hold a JSON object")
    required = ("scene_id", "sensor", "acquired_at", "pixel_size_m", "width", "height", "bands")
    missing = [k for k in required if k not in doc]
    if missing:
        raise SceneFormatError(f"scene.json missing keys: {missing}")
    nodata = doc.get("nodata", "nan")
    if nodata == "nan":
        nodata = math.nan
    elif not isinstance(nodata, (int, float)):
        raise SceneFormatError(f"nodata must be a number or 'nan', got {nodata!r}")
    bands = doc["bands"]
    if not isinstance(bands, list):
        raise SceneFormatError("bands must be an array of strings")
    try:
        return SceneMetadata(
            scene_id=doc["scene_id"],
            sensor=doc["sensor"],
            acquired_at=_parse_timestamp(doc["acquired_at"]),
            pixel_size_m=doc["pixel_size_m"],
            band_labels=tuple(bands),
            width=doc["width"],
            height=doc["height"],
            nodata=float(nodata),
            geo=doc.get("geo"),
        )
    except ValueError as exc:
        raise SceneFormatError(str(exc)) from exc


def load_scene(directory) -> Raster:
    """Load a portable scene directory into a Raster.

    Raises SceneFormatError for a missing file, malformed metadata, duplicate
    band labels, or a payload whose size disagrees with the metadata.
    """
    d = Path(directory)
    meta_path = d / _SCENE_JSON
    bin_path = d / _BANDS_BIN
    if not meta_path.is_file():
        raise SceneFormatError(f"missing {meta_path}")
    try:
        doc = json.loads(meta_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SceneFormatError(f"malformed {meta_path}: {exc}") from exc
    metadata = _metadata_from_json(doc)
    if not bin_path.is_file():
        raise SceneFormatError(f"missing {bin_path}")
    payload = bin_path.read_bytes()
    expected = metadata.sample_count * 4
    if len(payload) != expected:
        raise SceneFormatError(
            f"payload is {len(payload)} bytes, expected {expected} "
            f"({metadata.n_bands} bands x {metadata.height}x{metadata.width} float32)"
        )
    samples = np.frombuffer(payload, dtype="<f4")
    try:
        return Raster(metadata, samples)
    except ValueError as exc:
        raise SceneFormatError(str(exc)) from exc


def save_scene(raster: Raster, directory) -> None:
    """Write a Raster as a portable scene directory.

    Files are staged under temporary names and renamed into place, so a
    failure leaves no partial scene behind.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tmp_meta = d / f"{_SCENE_JSON}.tmp-{os.getpid()}"
    tmp_bin = d / f"{_BANDS_BIN}.tmp-{os.getpid()}"
    try:
        tmp_meta.write_text(
            json.dumps(_metadata_to_json(raster.metadata), indent=2) + "\n",
            encoding="utf-8",
        )
        tmp_bin.write_bytes(raster.samples.astype("<f4", copy=False).tobytes())
        os.replace(tmp_meta, d / _SCENE_JSON)
        os.replace(tmp_bin, d / _BANDS_BIN)
    finally:
        tmp_meta.unlink(missing_ok=True)
        tmp_bin.unlink(missing_ok=True)
