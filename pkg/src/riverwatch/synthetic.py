"""Synthetic scene builders for tests, demos, and benchmarks.

Each land-cover class gets a fixed four-band reflectance signature; scenes are
those signatures plus a little seeded Gaussian noise, so a forest trained on
one synthetic scene classifies another near-perfectly. Nothing here is tuned
to real imagery.
"""

from __future__ import annotations

from datetime import datetime, timezone

import numpy as np

from .forest import TrainingSet
from .indices import CROSS_SENSOR_FEATURES
from .raster import CORE_BANDS, Raster, SceneMetadata

#: Reflectance per class id in (blue, green, red, nir) order. Waste is bright
#: with a strong NIR bounce, water dark and NIR-absorbing, vegetation NIR-high
#: but red-low, buildings flat and bright, bare ground a dull brown ramp.
CLASS_SIGNATURES = (
    (0.20, 0.25, 0.30, 0.60),
    (0.08, 0.12, 0.06, 0.03),
    (0.04, 0.10, 0.06, 0.50),
    (0.30, 0.30, 0.30, 0.35),
    (0.18, 0.14, 0.10, 0.25),
)

_EPOCH = datetime(2024, 6, 1, 10, 0, tzinfo=timezone.utc)


def scene_from_classes(
    class_map: np.ndarray,
    scene_id: str = "synthetic",
    pixel_size_m: float = 10.0,
    sensor: str = "synthetic",
    acquired_at: datetime = _EPOCH,
    noise: float = 0.01,
    seed: int = 7,
    nodata_mask: np.ndarray | None = None,
) -> Raster:
    """Render a class-id map (values 0..4) into a four-band scene.

    Pixels under nodata_mask become NaN in every band.
    """
    cmap = np.asarray(class_map)
    if cmap.ndim != 2:
        raise ValueError("class_map must be 2-D")
    if cmap.min() < 0 or cmap.max() >= len(CLASS_SIGNATURES):
        raise ValueError("class_map values must be class ids 0..4")
    h, w = cmap.shape
    rng = np.random.Generator(np.random.PCG64(seed))
    sig = np.asarray(CLASS_SIGNATURES, dtype=np.float64)
    samples = sig[cmap].transpose(2, 0, 1) + rng.normal(0.0, noise, size=(4, h, w))
    samples = np.clip(samples, 1e-4, None).astype(np.float32)
    if nodata_mask is not None:
        samples[:, np.asarray(nodata_mask, dtype=bool)] = np.nan
    md = SceneMetadata(
        scene_id=scene_id,
        sensor=sensor,
        acquired_at=acquired_at,
        pixel_size_m=pixel_size_m,
        band_labels=CORE_BANDS,
        width=w,
        height=h,
    )
    return Raster(md, samples)


def label_raster(class_map: np.ndarray, scene: Raster) -> Raster:
    """Single-band label scene for a class map: stored values are class id + 1."""
    md = scene.metadata
    labels_md = SceneMetadata(
        scene_id=md.scene_id + "-labels",
        sensor=md.sensor,
        acquired_at=md.acquired_at,
        pixel_size_m=md.pixel_size_m,
        band_labels=("labels",),
        width=md.width,
        height=md.height,
    )
    return Raster(labels_md, np.asarray(class_map, dtype=np.float32) + 1.0)


def landfill_layout(height: int = 64, width: int = 64, blob: int = 16) -> np.ndarray:
    """Vegetated background with a square waste blob in the middle."""
    cmap = np.full((height, width), 2, dtype=np.int64)
    r0 = (height - blob) // 2
    c0 = (width - blob) // 2
    cmap[r0:r0 + blob, c0:c0 + blob] = 0
    return cmap


def blockage_layout(height: int = 256, width: int = 256) -> tuple[np.ndarray, dict]:
    """River scene: a water strip, an 8x8 waste island on it, three specks.

    Geometry scales with the grid so the specks always sit well clear of the
    river. Returns the class map plus the layout (strip columns, island
    slice, speck coordinates) so tests can assert against it.
    """
    if height < 48 or width < 48:
        raise ValueError("blockage layout needs at least a 48x48 grid")
    cmap = np.full((height, width), 2, dtype=np.int64)
    strip = (width // 4, width // 4 + max(width // 12, 12))
    cmap[:, strip[0]:strip[1]] = 1
    mid = (strip[0] + strip[1]) // 2
    island = (slice(height // 2 - 4, height // 2 + 4), slice(mid - 4, mid + 4))
    cmap[island] = 0
    specks = (
        (height // 12, (3 * width) // 4),
        (height // 6, (7 * width) // 8),
        ((3 * height) // 4, width // 8),
    )
    for r, c in specks:
        cmap[r, c] = 0
    return cmap, {"strip_cols": strip, "island": island, "specks": specks}


def five_class_layout(height: int = 64, width: int = 64) -> np.ndarray:
    """Five horizontal stripes, one per class, for quick end-to-end training."""
    cmap = np.zeros((height, width), dtype=np.int64)
    for cid in range(5):
        cmap[cid * height // 5:(cid + 1) * height // 5] = cid
    return cmap


def gaussian_blob_training_set(n_per_class: int = 200, seed: int = 11) -> TrainingSet:
    """Five Gaussian blobs in 9-D feature space, adjacent means 3 sigma apart.

    Class c is N(mean=3c, sigma=1) in every feature, which keeps the blobs
    cleanly separable along each axis.
    """
    from .pipelines import WASTE_CLASSES

    rng = np.random.Generator(np.random.PCG64(seed))
    n_features = len(CROSS_SENSOR_FEATURES)
    features = []
    labels = []
    for cid in range(len(WASTE_CLASSES)):
        features.append(rng.normal(3.0 * cid, 1.0, size=(n_per_class, n_features)))
        labels.append(np.full(n_per_class, cid, dtype=np.int32))
    return TrainingSet(
        features=np.concatenate(features),
        labels=np.concatenate(labels),
        class_names=WASTE_CLASSES,
        feature_names=CROSS_SENSOR_FEATURES,
    )
