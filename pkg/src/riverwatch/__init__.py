"""riverwatch: waste detection and change monitoring for multispectral imagery."""

__version__ = "0.1.0"

from .raster import (
    ClassRaster,
    Raster,
    SceneFormatError,
    SceneMetadata,
    load_scene,
    save_scene,
)
from .indices import FeatureStack, IndexKind, compute_feature_stack, compute_index
from .morphology import Kernel, dilate, erode, opening
from .forest import (
    Forest,
    Hyperparams,
    TrainingSet,
    cross_validate,
    predict_proba,
    predict_raster,
    train_forest,
)
from .pipelines import DetectionReport, run_blockage, run_hotspot

__all__ = [
    "ClassRaster",
    "DetectionReport",
    "FeatureStack",
    "Forest",
    "Hyperparams",
    "IndexKind",
    "Kernel",
    "Raster",
    "SceneFormatError",
    "SceneMetadata",
    "TrainingSet",
    "compute_feature_stack",
    "compute_index",
    "cross_validate",
    "dilate",
    "erode",
    "load_scene",
    "opening",
    "predict_proba",
    "predict_raster",
    "run_blockage",
    "run_hotspot",
    "save_scene",
    "train_forest",
]
