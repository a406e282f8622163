"""Dual-path temporal-map video grounding."""

from ._core import (
    CheckpointError,
    ManifestError,
    TrainingError,
    calibrate_agnostic,
    dump_map,
    evaluate,
    generate_synthetic,
    nms_select,
    predict,
    preset,
    read_features,
    scale_iou,
    temporal_iou,
    train,
    validity_mask,
)

__all__ = [
    "CheckpointError",
    "ManifestError",
    "TrainingError",
    "calibrate_agnostic",
    "dump_map",
    "evaluate",
    "generate_synthetic",
    "nms_select",
    "predict",
    "preset",
    "read_features",
    "scale_iou",
    "temporal_iou",
    "train",
    "validity_mask",
]
