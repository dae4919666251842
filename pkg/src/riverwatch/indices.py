"""Spectral indices and the per-pixel feature stack fed to the classifier.

Five band-ratio indices are supported:

    PI    = NIR / (NIR + Red)
    NDWI  = (Green - NIR) / (Green + NIR)
    NDVI  = (NIR - Red) / (NIR + Red)
    RNDVI = (Red - NIR) / (Red + NIR)
    SR    = NIR / Red

Pixels whose inputs are nodata or whose denominator is zero are marked
invalid rather than producing infinities.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .raster import BLUE, CORE_BANDS, GREEN, NIR, RED, Raster


class IndexKind(str, Enum):
    PI = "pi"
    NDWI = "ndwi"
    NDVI = "ndvi"
    RNDVI = "rndvi"
    SR = "sr"


#: Bands each index reads, in scene-lookup order.
REQUIRED_BANDS = {
    IndexKind.PI: (RED, NIR),
    IndexKind.NDWI: (GREEN, NIR),
    IndexKind.NDVI: (RED, NIR),
    IndexKind.RNDVI: (RED, NIR),
    IndexKind.SR: (RED, NIR),
}

CROSS_SENSOR_MODE = "cross-sensor"
SENTINEL_FULL_MODE = "sentinel-full"
FEATURE_MODES = (CROSS_SENSOR_MODE, SENTINEL_FULL_MODE)

#: Feature order for the cross-sensor stack (shared Sentinel-2 / PlanetScope bands).
CROSS_SENSOR_FEATURES = (
    BLUE, GREEN, RED, NIR,
    IndexKind.PI.value, IndexKind.NDWI.value, IndexKind.NDVI.value,
    IndexKind.RNDVI.value, IndexKind.SR.value,
)


def compute_index(raster: Raster, kind: IndexKind) -> tuple[np.ndarray, np.ndarray]:
    """Compute one index plane.

    Returns ``(values, valid)``: a float64 (height, width) plane and a boolean
    mask. Invalid pixels (nodata input or zero denominator) hold NaN.

    Raises KeyError if a required band is missing from the scene.
    """
    kind = IndexKind(kind)
    bands = {label: raster.band(label).astype(np.float64) for label in REQUIRED_BANDS[kind]}
    valid = raster.valid_mask(REQUIRED_BANDS[kind])

    if kind is IndexKind.PI:
        num, den = bands[NIR], bands[NIR] + bands[RED]
    elif kind is IndexKind.NDWI:
        num, den = bands[GREEN] - bands[NIR], bands[GREEN] + bands[NIR]
    elif kind is IndexKind.NDVI:
        num, den = bands[NIR] - bands[RED], bands[NIR] + bands[RED]
    elif kind is IndexKind.RNDVI:
        num, den = bands[RED] - bands[NIR], bands[RED] + bands[NIR]
    else:  # SR
        num, den = bands[NIR], bands[RED]

    valid = valid & (den != 0.0)
    values = np.full(raster.band(NIR).shape, np.nan, dtype=np.float64)
    np.divide(num, den, out=values, where=valid)
    return values, valid


@dataclass(frozen=True)
class FeatureStack:
    """Per-pixel feature planes plus a shared validity mask.

    ``planes`` has shape (features, height, width), float32. A pixel is valid
    iff every input band is valid there and every index is defined there.
    """

    feature_names: tuple[str, ...]
    planes: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if len(self.feature_names) != self.planes.shape[0]:
            raise ValueError("feature_names and planes disagree")
        if self.valid.shape != self.planes.shape[1:]:
            raise ValueError("valid mask shape mismatch")
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    def matrix(self) -> np.ndarray:
        """Valid pixels as a C-contiguous (n_valid, features) float64 matrix."""
        flat = self.planes.reshape(self.planes.shape[0], -1)
        return np.ascontiguousarray(flat[:, self.valid.ravel()].T, dtype=np.float64)


def compute_feature_stack(raster: Raster, mode: str = CROSS_SENSOR_MODE) -> FeatureStack:
    """Assemble the classifier's feature stack for one scene.

    ``cross-sensor`` uses the four shared bands plus the five indices
    (9 features). ``sentinel-full`` additionally appends every other band in
    the scene as a raw feature, in metadata order.
    """
    if mode not in FEATURE_MODES:
        raise ValueError(f"unknown feature mode {mode!r}; expected one of {FEATURE_MODES}")
    missing = [b for b in CORE_BANDS if b not in raster.metadata.band_labels]
    if missing:
        raise KeyError(f"scene lacks required bands {missing} for mode {mode!r}")

    extra = ()
    if mode == SENTINEL_FULL_MODE:
        extra = tuple(b for b in raster.metadata.band_labels if b not in CORE_BANDS)

    used_bands = CORE_BANDS + extra
    valid = raster.valid_mask(used_bands)

    names: list[str] = []
    planes: list[np.ndarray] = []
    for label in CORE_BANDS:
        names.append(label)
        planes.append(raster.band(label).astype(np.float32))
    for kind in (IndexKind.PI, IndexKind.NDWI, IndexKind.NDVI, IndexKind.RNDVI, IndexKind.SR):
        values, index_valid = compute_index(raster, kind)
        valid &= index_valid
        names.append(kind.value)
        planes.append(values.astype(np.float32))
    for label in extra:
        names.append(label)
        planes.append(raster.band(label).astype(np.float32))

    stacked = np.stack(planes)
    # Zero-fill invalid positions so downstream kernels never see NaN.
    stacked[:, ~valid] = 0.0
    return FeatureStack(tuple(names), stacked, valid)
