"""Detection pipelines, waste-area reports, and the RGBA renderers.

Two pipelines share the classification step. The hot-spot pipeline is the
classification alone; the blockage pipeline additionally cleans a waste|water
binary mask with morphological opening plus one dilation and masks the output
to it, which drops isolated noise pixels while keeping debris attached to the
river.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np
from PIL import Image

from .forest import Forest, predict_raster
from .indices import (
    CROSS_SENSOR_FEATURES,
    CROSS_SENSOR_MODE,
    SENTINEL_FULL_MODE,
    compute_feature_stack,
)
from .morphology import Kernel, dilate, opening
from .raster import NODATA_CLASS, ClassRaster, Raster, SceneMetadata, pixel_area_m2

#: Land-cover classes in fixed id order (0..4).
WASTE_CLASSES = ("waste", "water", "forest/meadow", "buildings", "bare ground")
WASTE = 0
WATER = 1

#: RGB per class id, same order as WASTE_CLASSES.
CLASS_COLORS = (
    (255, 0, 4),
    (18, 0, 222),
    (6, 205, 16),
    (170, 170, 170),
    (133, 100, 33),
)

#: Waste-confidence heatmap bins, highest first; edges are closed below.
HEATMAP_BINS = (
    (0.9, (255, 0, 4)),
    (0.8, (246, 221, 0)),
    (0.7, (6, 205, 16)),
)

HOTSPOT = "hotspot"
BLOCKAGE = "blockage"


@dataclass(frozen=True)
class DetectionReport:
    """Waste-extent measurement for one classified scene."""

    scene_id: str
    timestamp: datetime
    waste_pixels: int
    waste_area_m2: float
    total_valid_pixels: int
    waste_fraction: float
    pipeline: str
    quality_warning: bool = False

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "timestamp": self.timestamp.isoformat(),
            "waste_pixels": self.waste_pixels,
            "waste_area_m2": self.waste_area_m2,
            "total_valid_pixels": self.total_valid_pixels,
            "waste_fraction": self.waste_fraction,
            "pipeline": self.pipeline,
            "quality_warning": self.quality_warning,
        }


def _build_report(md: SceneMetadata, pipeline: str, waste_pixels: int, total_valid: int) -> DetectionReport:
    fraction = waste_pixels / total_valid if total_valid > 0 else 0.0
    return DetectionReport(
        scene_id=md.scene_id,
        timestamp=md.acquired_at,
        waste_pixels=int(waste_pixels),
        waste_area_m2=waste_pixels * pixel_area_m2(md),
        total_valid_pixels=int(total_valid),
        waste_fraction=fraction,
        pipeline=pipeline,
        quality_warning=total_valid == 0,
    )


def feature_mode_for(feature_names) -> str:
    """Pick the stack mode matching a model's feature list."""
    return CROSS_SENSOR_MODE if tuple(feature_names) == CROSS_SENSOR_FEATURES else SENTINEL_FULL_MODE


def classify(scene: Raster, forest: Forest) -> ClassRaster:
    """Classify every valid pixel using the stack mode the forest was trained on."""
    stack = compute_feature_stack(scene, feature_mode_for(forest.feature_names))
    return predict_raster(forest, stack)


def run_hotspot(scene: Raster, forest: Forest) -> tuple[ClassRaster, DetectionReport]:
    cr = classify(scene, forest)
    waste = int(np.count_nonzero(cr.class_ids == WASTE))
    total = int(np.count_nonzero(cr.valid_mask()))
    return cr, _build_report(scene.metadata, HOTSPOT, waste, total)


def run_blockage(
    scene: Raster, forest: Forest, kernel: Kernel = Kernel()
) -> tuple[ClassRaster, np.ndarray, DetectionReport]:
    """Blockage detection: classify, clean the waste|water mask, count inside it.

    Returns the mask-restricted class raster, the cleaned boolean mask, and a
    report whose waste count covers only pixels inside that mask. The valid
    total still refers to the full classification, so the fraction stays
    comparable with the hot-spot pipeline.
    """
    cr = classify(scene, forest)
    binary = (cr.class_ids == WASTE) | (cr.class_ids == WATER)
    cleaned = dilate(opening(binary, kernel), kernel)

    ids = np.where(cleaned, cr.class_ids, np.uint8(NODATA_CLASS)).astype(np.uint8)
    conf = np.where(cleaned, cr.confidence, np.float32(0.0)).astype(np.float32)
    masked = ClassRaster(class_ids=ids, confidence=conf, class_names=cr.class_names)

    waste = int(np.count_nonzero((cr.class_ids == WASTE) & cleaned))
    total = int(np.count_nonzero(cr.valid_mask()))
    return masked, cleaned, _build_report(scene.metadata, BLOCKAGE, waste, total)


# ---------------------------------------------------------------------------
# Renderers
# ---------------------------------------------------------------------------


def render_classification(cr: ClassRaster) -> np.ndarray:
    """RGBA class map: one flat color per class id, nodata transparent."""
    ids = cr.class_ids
    valid = cr.valid_mask()
    if valid.any() and int(ids[valid].max()) >= len(CLASS_COLORS):
        raise ValueError("class id outside the five-class palette")
    lut = np.zeros((256, 4), dtype=np.uint8)
    for cid, rgb in enumerate(CLASS_COLORS):
        lut[cid] = (*rgb, 255)
    return lut[ids]


def render_heatmap(cr: ClassRaster) -> np.ndarray:
    """RGBA confidence map for waste pixels only.

    Bin edges compare in float32 so a confidence constructed as 0.9 and one
    computed as 90 votes out of 100 land in the same bin. Anything below the
    lowest bin, every non-waste pixel, and nodata renders transparent.
    """
    out = np.zeros((*cr.class_ids.shape, 4), dtype=np.uint8)
    waste = cr.class_ids == WASTE
    remaining = waste.copy()
    for edge, rgb in HEATMAP_BINS:
        hit = remaining & (cr.confidence >= np.float32(edge))
        out[hit] = (*rgb, 255)
        remaining &= ~hit
    return out


def png_bytes(rgba: np.ndarray) -> bytes:
    """Encode an (H, W, 4) uint8 array as PNG bytes."""
    if rgba.ndim != 3 or rgba.shape[2] != 4 or rgba.dtype != np.uint8:
        raise ValueError("expected an (H, W, 4) uint8 RGBA array")
    buf = io.BytesIO()
    Image.fromarray(rgba, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def write_png(rgba: np.ndarray, path: str | Path) -> None:
    Path(path).write_bytes(png_bytes(rgba))


# ---------------------------------------------------------------------------
# Class-raster persistence via the portable scene format
# ---------------------------------------------------------------------------

_CLASS_BAND = "class_id"
_CONF_BAND = "confidence"


def class_raster_to_scene(cr: ClassRaster, md: SceneMetadata) -> Raster:
    """Pack a classification as a two-band scene (class ids and confidence).

    Class id 255 is stored as the float 255, not as the nodata sentinel, so
    the payload round-trips exactly.
    """
    out_md = SceneMetadata(
        scene_id=md.scene_id,
        sensor=md.sensor,
        acquired_at=md.acquired_at,
        pixel_size_m=md.pixel_size_m,
        band_labels=(_CLASS_BAND, _CONF_BAND),
        width=md.width,
        height=md.height,
        geo=md.geo,
    )
    samples = np.stack([cr.class_ids.astype(np.float32), cr.confidence])
    return Raster(out_md, samples)


def scene_to_class_raster(raster: Raster, class_names=WASTE_CLASSES) -> ClassRaster:
    """Inverse of class_raster_to_scene."""
    try:
        ids_f = raster.band(_CLASS_BAND)
        conf = raster.band(_CONF_BAND)
    except KeyError as exc:
        raise ValueError(f"not a classification scene: {exc}") from exc
    ids = ids_f.astype(np.uint8)
    if not np.array_equal(ids.astype(np.float32), ids_f):
        raise ValueError("class_id band holds values outside uint8 range")
    return ClassRaster(class_ids=ids, confidence=conf.copy(), class_names=tuple(class_names))
